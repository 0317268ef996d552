#include <benchmark/benchmark.h>

#include "dvu/dataio.hpp"
#include "dvu/tracker.hpp"
#include "dvu/vkf.hpp"

namespace tracker = dvu::tracker;

namespace {

dvu::dataio::Scene make_scene(int T) {
  dvu::dataio::SuiteConfig cfg;
  cfg.scenarios = {"sinusoidal"};
  cfg.scenes_per_scenario = 1;
  cfg.T = T;
  cfg.noise_sigma = 0.02;
  cfg.seed = 5;
  return dvu::dataio::synth_benchmark(cfg)[0];
}

}  // namespace

static void BM_TrackDvae(benchmark::State& state) {
  const auto scene = make_scene(60);
  const dvu::srnn::SrnnParams params = dvu::srnn::SrnnParams::init(3);
  tracker::TrackerConfig cfg;
  cfg.iters = static_cast<int>(state.range(0));
  cfg.init_iters = 5;
  for (auto _ : state) {
    auto res = tracker::track(scene.data, &params, cfg);
    benchmark::DoNotOptimize(res.state.m);
  }
}
BENCHMARK(BM_TrackDvae)->Arg(10)->Arg(70)->Unit(benchmark::kMillisecond);

static void BM_TrackLinear(benchmark::State& state) {
  const auto scene = make_scene(60);
  tracker::TrackerConfig cfg;
  cfg.iters = static_cast<int>(state.range(0));
  cfg.init_iters = 5;
  for (auto _ : state) {
    auto res = dvu::vkf::vkf_track(scene.data, cfg);
    benchmark::DoNotOptimize(res.state.m);
  }
}
BENCHMARK(BM_TrackLinear)->Arg(10)->Arg(70)->Unit(benchmark::kMillisecond);

static void BM_EwStep(benchmark::State& state) {
  const auto scene = make_scene(60);
  const auto phi = tracker::fixed_phi(scene.data, 0.04);
  auto st = tracker::TrackState::allocate(60, 3, false);
  for (int t = 0; t < 60; ++t) {
    for (int n = 0; n < 3; ++n) {
      st.m[t][n] = scene.gt[n].boxes.at(t + 1).vec();
      st.V[t][n] = phi.diag[0][0];
    }
  }
  for (auto _ : state) {
    auto eta = tracker::e_w_step(scene.data, st, phi);
    benchmark::DoNotOptimize(eta.eta);
  }
}
BENCHMARK(BM_EwStep);
