#include <benchmark/benchmark.h>

#include "dvu/metrics.hpp"
#include "dvu/rng.hpp"

namespace metrics = dvu::metrics;
using dvu::Rng;

static void BM_Hungarian(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(9);
  Eigen::MatrixXd cost(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cost(i, j) = rng.uniform();
  }
  for (auto _ : state) {
    auto a = metrics::hungarian(cost);
    benchmark::DoNotOptimize(a.total_cost);
  }
}
BENCHMARK(BM_Hungarian)->Arg(3)->Arg(10)->Arg(50);

static void BM_Evaluate(benchmark::State& state) {
  const int T = 300;
  metrics::TrackSet gt;
  Rng rng(4);
  for (int i = 0; i < 3; ++i) {
    metrics::Track tr;
    tr.id = i + 1;
    for (int t = 1; t <= T; ++t) {
      const double x = 0.3 * i + 0.001 * t;
      tr.boxes[t] = dvu::BBox{x, 0.5, x + 0.08, 0.35};
    }
    gt.push_back(tr);
  }
  metrics::TrackSet hyp = gt;
  for (auto& tr : hyp) {
    for (auto& [t, b] : tr.boxes) {
      const double j = 0.003 * rng.normal();
      b.l += j;
      b.r += j;
    }
  }
  for (auto _ : state) {
    auto rep = metrics::evaluate(gt, hyp);
    benchmark::DoNotOptimize(rep.mota);
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
