#include <benchmark/benchmark.h>

#include "dvu/autodiff.hpp"
#include "dvu/pretrain.hpp"
#include "dvu/srnn.hpp"

namespace srnn = dvu::srnn;
using dvu::Rng;

static void BM_LstmStep(benchmark::State& state) {
  const srnn::SrnnParams p = srnn::SrnnParams::init(1);
  srnn::LstmState st;
  const Eigen::Vector4d x(0.2, 0.3, 0.4, 0.5);
  for (auto _ : state) {
    lstm_step(p, x, st);
    benchmark::DoNotOptimize(st.h);
  }
}
BENCHMARK(BM_LstmStep);

static void BM_DecoderHead(benchmark::State& state) {
  const srnn::SrnnParams p = srnn::SrnnParams::init(1);
  srnn::LstmState st;
  lstm_step(p, Eigen::Vector4d(0.2, 0.3, 0.4, 0.5), st);
  const Eigen::Vector4d z(0.1, -0.1, 0.2, 0.0);
  for (auto _ : state) {
    auto g = decode_s(p, st, z);
    benchmark::DoNotOptimize(g.mean);
  }
}
BENCHMARK(BM_DecoderHead);

static void BM_SequenceElboBackward(benchmark::State& state) {
  const srnn::SrnnParams p = srnn::SrnnParams::init(1);
  const int T = static_cast<int>(state.range(0));
  std::vector<Eigen::Vector4d> seq;
  Rng data_rng(2);
  for (int t = 0; t < T; ++t) {
    seq.emplace_back(data_rng.uniform(), data_rng.uniform(), data_rng.uniform(),
                     data_rng.uniform());
  }
  std::vector<double> grad;
  dvu::ad::Tape tape;
  for (auto _ : state) {
    const double loss = dvu::pretrain::sequence_loss_and_grad(p, seq, Rng(7), grad, tape);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * T);
}
BENCHMARK(BM_SequenceElboBackward)->Arg(10)->Arg(60);

static void BM_Generate(benchmark::State& state) {
  const srnn::SrnnParams p = srnn::SrnnParams::init(1);
  for (auto _ : state) {
    Rng rng(3);
    auto out = srnn::generate(p, Eigen::Vector4d(0.4, 0.6, 0.5, 0.5), 60, rng);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_Generate);
