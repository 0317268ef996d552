#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dvu/srnn.hpp"

using dvu::Rng;
namespace ad = dvu::ad;
namespace srnn = dvu::srnn;
using Eigen::Vector4d;

namespace {

// Gradient of a scalar built on an SRNN tape vs central finite differences
// over all network parameters.
double srnn_grad_check(
    const srnn::SrnnParams& params,
    const std::function<ad::Var(ad::Tape&, const srnn::BoundParams&)>& build, double step = 1e-5) {
  auto run = [&](std::span<const double> flat, std::vector<double>* grad_out) {
    srnn::SrnnParams p = params;
    p.unflatten(flat);
    ad::Tape tape;
    srnn::BoundParams bp = srnn::bind(tape, p, true);
    ad::Var loss = build(tape, bp);
    if (grad_out) {
      tape.backward(loss);
      grad_out->clear();
      for (const ad::Var& v : bp.all()) {
        const ad::Tensor& g = tape.grad(v);
        grad_out->insert(grad_out->end(), g.data.begin(), g.data.end());
      }
    }
    return loss.value().data[0];
  };
  const std::vector<double> flat = params.flatten();
  std::vector<double> analytic;
  run(flat, &analytic);
  return ad::finite_diff_check([&](std::span<const double> p) { return run(p, nullptr); }, flat,
                               analytic, step);
}

}  // namespace

TEST_CASE("parameter bookkeeping") {
  srnn::SrnnParams p = srnn::SrnnParams::zeros();
  CHECK(p.param_count() == 1488);
  CHECK(p.named().size() == 19);
  srnn::SrnnParams q = srnn::SrnnParams::init(1);
  auto flat = q.flatten();
  CHECK(flat.size() == 1488);
  srnn::SrnnParams r = srnn::SrnnParams::zeros();
  r.unflatten(flat);
  CHECK(r.flatten() == flat);
}

TEST_CASE("lstm zero case") {
  srnn::SrnnParams p = srnn::SrnnParams::zeros();
  srnn::LstmState st;
  lstm_step(p, Vector4d::Zero(), st);
  for (int j = 0; j < srnn::kHiddenDim; ++j) {
    CHECK(st.h[j] == 0.0);
    CHECK(st.c[j] == 0.0);
  }
}

TEST_CASE("lstm single-unit scalar oracle") {
  // Only hidden unit 0 is wired, driven by h_{t-1}[0]; input is zero.
  srnn::SrnnParams p = srnn::SrnnParams::zeros();
  const double ai = 0.7, af = -0.4, ag = 1.1, ao = 0.9;
  p.lstm_w_hh.at(0, 0) = ai;
  p.lstm_w_hh.at(8, 0) = af;
  p.lstm_w_hh.at(16, 0) = ag;
  p.lstm_w_hh.at(24, 0) = ao;

  srnn::LstmState st;
  st.h[0] = 0.7;
  st.c[0] = 0.3;
  lstm_step(p, Vector4d::Zero(), st);

  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const double gi = sig(ai * 0.7), gf = sig(af * 0.7), gg = std::tanh(ag * 0.7),
               go = sig(ao * 0.7);
  const double c_expect = gf * 0.3 + gi * gg;
  CHECK(st.c[0] == doctest::Approx(c_expect).epsilon(1e-15));
  CHECK(st.h[0] == doctest::Approx(go * std::tanh(c_expect)).epsilon(1e-15));
  // Unwired units stay at the zero fixed point apart from gate offsets.
  CHECK(st.h[1] == 0.0);
}

TEST_CASE("lstm determinism") {
  srnn::SrnnParams p = srnn::SrnnParams::init(5);
  const Vector4d x(0.1, -0.2, 0.3, 0.4);
  srnn::LstmState a, b;
  for (int i = 0; i < 3; ++i) lstm_step(p, x, a);
  for (int i = 0; i < 3; ++i) lstm_step(p, x, b);
  CHECK(a.h == b.h);
  CHECK(a.c == b.c);
}

TEST_CASE("zero-weight heads emit their biases") {
  srnn::SrnnParams p = srnn::SrnnParams::zeros();
  p.dz2_b = ad::Tensor::vec({0.1, 0.2, 0.3, 0.4, -1.0, -2.0, 3.0, 0.5});
  p.ds1_b = ad::Tensor::vec({1, 2, 3, 4, 0, 0, 0, -13.0});
  p.ez2_b = ad::Tensor::vec({0, 0, 0, 0, 5.0, 0, 0, 0});
  srnn::LstmState st;
  st.h = {0.3, -0.1, 0.5, 0, 0, 0, 0, 0};  // ignored by zero weights

  const srnn::GaussianDiag pz = prior_z(p, st, Vector4d(1, 1, 1, 1));
  CHECK(pz.mean == Vector4d(0.1, 0.2, 0.3, 0.4));
  CHECK(pz.logvar == Vector4d(-1.0, -2.0, 3.0, 0.5));

  const srnn::GaussianDiag ps = decode_s(p, st, Vector4d::Zero());
  CHECK(ps.mean == Vector4d(1, 2, 3, 4));
  CHECK(ps.logvar[3] == -12.0);  // clamped from -13

  const srnn::GaussianDiag q = encode_z(p, st, Vector4d::Zero(), Vector4d::Zero());
  CHECK(q.logvar[0] == 4.0);  // clamped from 5
}

TEST_CASE("logvar clamping holds for extreme parameters") {
  Rng rng(9);
  srnn::SrnnParams p = srnn::SrnnParams::init(2);
  for (auto& [name, t] : p.named()) {
    if (name.find(".b") != std::string::npos) {
      for (double& v : t->data) v = rng.uniform(-50.0, 50.0);
    }
  }
  srnn::LstmState st;
  lstm_step(p, Vector4d(0.2, 0.3, 0.4, 0.5), st);
  for (const srnn::GaussianDiag& g :
       {prior_z(p, st, Vector4d::Ones()), decode_s(p, st, Vector4d::Ones()),
        encode_z(p, st, Vector4d::Ones(), Vector4d::Ones())}) {
    for (int d = 0; d < 4; ++d) {
      CHECK(g.logvar[d] >= srnn::kLogVarMin);
      CHECK(g.logvar[d] <= srnn::kLogVarMax);
    }
  }
}

TEST_CASE("plain and tape forward paths agree bit-for-bit") {
  srnn::SrnnParams p = srnn::SrnnParams::init(17);
  Rng rng(3);
  std::vector<Vector4d> seq;
  for (int t = 0; t < 6; ++t) {
    seq.emplace_back(rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
  }

  // Plain path.
  srnn::LstmState st;
  std::vector<srnn::GaussianDiag> plain_dec, plain_enc, plain_prior;
  Vector4d z_prev = Vector4d::Zero();
  for (int t = 0; t < 6; ++t) {
    lstm_step(p, t == 0 ? Vector4d::Zero().eval() : seq[t - 1], st);
    plain_enc.push_back(encode_z(p, st, seq[t], z_prev));
    plain_prior.push_back(prior_z(p, st, z_prev));
    plain_dec.push_back(decode_s(p, st, z_prev));
  }

  // Tape path with identical inputs.
  ad::Tape tape;
  srnn::BoundParams bp = srnn::bind(tape, p, false);
  srnn::LstmVarState vst = srnn::lstm_initial_state(tape);
  auto c4 = [&](const Vector4d& v) { return tape.constant(ad::Tensor({4}, {v[0], v[1], v[2], v[3]})); };
  ad::Var zp = c4(Vector4d::Zero());
  for (int t = 0; t < 6; ++t) {
    vst = srnn::lstm_step(tape, bp, t == 0 ? c4(Vector4d::Zero()) : c4(seq[t - 1]), vst);
    const srnn::GaussVar q = srnn::encode_z(tape, bp, vst.h, c4(seq[t]), zp);
    const srnn::GaussVar pz = srnn::prior_z(tape, bp, vst.h, zp);
    const srnn::GaussVar ps = srnn::decode_s(tape, bp, vst.h, zp);
    for (int d = 0; d < 4; ++d) {
      CHECK(q.mean.value().data[d] == plain_enc[t].mean[d]);
      CHECK(q.logvar.value().data[d] == plain_enc[t].logvar[d]);
      CHECK(pz.mean.value().data[d] == plain_prior[t].mean[d]);
      CHECK(ps.mean.value().data[d] == plain_dec[t].mean[d]);
      CHECK(ps.logvar.value().data[d] == plain_dec[t].logvar[d]);
    }
  }
}

TEST_CASE("shared recurrence: encoder and decoder see the same h") {
  srnn::SrnnParams p = srnn::SrnnParams::init(23);
  const std::vector<Vector4d> prefix = {{0.1, 0.2, 0.3, 0.4}, {0.2, 0.3, 0.4, 0.5}};
  srnn::LstmState enc, dec;
  for (const Vector4d& s : prefix) {
    lstm_step(p, s, enc);
    lstm_step(p, s, dec);
  }
  CHECK(enc.h == dec.h);
  CHECK(enc.c == dec.c);
}

TEST_CASE("reparam sample") {
  srnn::GaussianDiag g;
  g.mean = Vector4d(0.5, -0.5, 1.0, 2.0);
  g.logvar = Vector4d(0.2, -0.3, 0.0, 0.4);
  {
    ad::Tape tape;
    srnn::GaussVar gv{tape.constant(ad::Tensor({4}, {0.5, -0.5, 1.0, 2.0})),
                      tape.constant(ad::Tensor({4}, {0.2, -0.3, 0.0, 0.4}))};
    ad::Var s = srnn::reparam_sample(tape, gv, Vector4d::Zero());
    for (int d = 0; d < 4; ++d) CHECK(s.value().data[d] == g.mean[d]);
  }
  {
    // Variance floor: one unit of noise moves the sample by exp(-6) < 3e-3.
    ad::Tape tape;
    srnn::GaussVar gv{tape.constant(ad::Tensor({4}, {0.5, -0.5, 1.0, 2.0})),
                      tape.constant(ad::Tensor::full({4}, srnn::kLogVarMin))};
    ad::Var s = srnn::reparam_sample(tape, gv, Vector4d::Ones());
    for (int d = 0; d < 4; ++d) CHECK(std::abs(s.value().data[d] - g.mean[d]) < 3e-3);
  }
  {
    // Statistical check on 1e5 samples: mean and variance within 3 SE.
    Rng rng(1234);
    const int n = 100000;
    Eigen::Vector4d acc = Eigen::Vector4d::Zero(), acc2 = Eigen::Vector4d::Zero();
    for (int i = 0; i < n; ++i) {
      const Vector4d s = reparam_sample(g, rng);
      acc += s;
      acc2 += s.cwiseProduct(s);
    }
    const Vector4d mean = acc / n;
    const Vector4d var = acc2 / n - mean.cwiseProduct(mean);
    for (int d = 0; d < 4; ++d) {
      const double sd = std::exp(0.5 * g.logvar[d]);
      CHECK(std::abs(mean[d] - g.mean[d]) < 3.0 * sd / std::sqrt(double(n)));
      CHECK(std::abs(var[d] - sd * sd) < 3.0 * sd * sd * std::sqrt(2.0 / n));
    }
  }
}

TEST_CASE("gaussian_logpdf") {
  srnn::GaussianDiag std_normal;  // mean 0, logvar 0
  CHECK(gaussian_logpdf(Vector4d::Zero(), std_normal) ==
        doctest::Approx(-2.0 * std::log(2.0 * M_PI)).epsilon(1e-15));
  srnn::GaussianDiag g;
  g.mean = Vector4d(0.3, -0.7, 1.5, 0.0);
  g.logvar = Vector4d::Zero();
  CHECK(gaussian_logpdf(g.mean, g) == doctest::Approx(-2.0 * std::log(2.0 * M_PI)).epsilon(1e-15));

  // Random case against a per-dimension scalar oracle.
  Rng rng(5);
  g.logvar = Vector4d(0.3, -0.8, 0.1, 1.2);
  const Vector4d x(0.1, 0.4, -0.2, 2.2);
  double oracle = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double var = std::exp(g.logvar[d]);
    oracle += -0.5 * std::log(2.0 * M_PI * var) - 0.5 * (x[d] - g.mean[d]) * (x[d] - g.mean[d]) / var;
  }
  CHECK(gaussian_logpdf(x, g) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("kl_diag") {
  srnn::GaussianDiag q, p;
  q.mean = Vector4d(0.3, 0.1, -0.4, 0.9);
  q.logvar = Vector4d(0.1, -0.5, 0.7, 0.0);
  CHECK(kl_diag(q, q) == 0.0);

  srnn::GaussianDiag one;
  one.mean = Vector4d(1, 0, 0, 0);
  srnn::GaussianDiag zero;
  CHECK(kl_diag(one, zero) == doctest::Approx(0.5).epsilon(1e-15));

  // Monte Carlo oracle: E_q[log q - log p] over 1e6 samples within 3 SE.
  p.mean = Vector4d(0.0, 0.3, 0.2, 1.2);
  p.logvar = Vector4d(-0.2, 0.4, 0.3, -0.1);
  Rng rng(77);
  const int n = 1000000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector4d x = reparam_sample(q, rng);
    const double ratio = gaussian_logpdf(x, q) - gaussian_logpdf(x, p);
    acc += ratio;
    acc2 += ratio * ratio;
  }
  const double mc = acc / n;
  const double se = std::sqrt((acc2 / n - mc * mc) / n);
  CHECK(std::abs(kl_diag(q, p) - mc) < 3.0 * se);

  // Nonnegativity on random pairs.
  for (int i = 0; i < 200; ++i) {
    srnn::GaussianDiag a, b;
    for (int d = 0; d < 4; ++d) {
      a.mean[d] = rng.uniform(-2, 2);
      b.mean[d] = rng.uniform(-2, 2);
      a.logvar[d] = rng.uniform(-3, 3);
      b.logvar[d] = rng.uniform(-3, 3);
    }
    CHECK(kl_diag(a, b) >= 0.0);
  }
}

TEST_CASE("sequence_elbo pinned to normalization constants") {
  // Zero weights and biases: decoder is N(0, I) and the sequence is zero, so
  // only the 2*log(2pi) per frame survives; encoder and prior coincide.
  srnn::SrnnParams p = srnn::SrnnParams::zeros();
  const int T = 6;
  std::vector<Vector4d> seq(T, Vector4d::Zero());
  ad::Tape tape;
  srnn::BoundParams bp = srnn::bind(tape, p, false);
  Rng rng(1);
  ad::Var loss = srnn::sequence_elbo(tape, bp, seq, rng);
  CHECK(loss.value().data[0] == doctest::Approx(2.0 * T * std::log(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("sequence_elbo frozen-noise determinism") {
  srnn::SrnnParams p = srnn::SrnnParams::init(3);
  std::vector<Vector4d> seq;
  Rng data_rng(8);
  for (int t = 0; t < 5; ++t) {
    seq.emplace_back(data_rng.uniform(), data_rng.uniform(), data_rng.uniform(),
                     data_rng.uniform());
  }
  auto eval = [&] {
    ad::Tape tape;
    srnn::BoundParams bp = srnn::bind(tape, p, false);
    Rng rng(42);
    return srnn::sequence_elbo(tape, bp, seq, rng).value().data[0];
  };
  CHECK(eval() == eval());
}

TEST_CASE("sequence_elbo requires T >= 2") {
  srnn::SrnnParams p = srnn::SrnnParams::zeros();
  ad::Tape tape;
  srnn::BoundParams bp = srnn::bind(tape, p, false);
  std::vector<Vector4d> seq(1, Vector4d::Zero());
  Rng rng(0);
  CHECK_THROWS_AS(srnn::sequence_elbo(tape, bp, seq, rng), dvu::ConfigError);
}

TEST_CASE("elbo gradient matches finite differences (frozen noise)") {
  srnn::SrnnParams p = srnn::SrnnParams::init(11);
  std::vector<Vector4d> seq;
  Rng data_rng(21);
  for (int t = 0; t < 5; ++t) {
    seq.emplace_back(data_rng.uniform(0.2, 0.8), data_rng.uniform(0.2, 0.8),
                     data_rng.uniform(0.2, 0.8), data_rng.uniform(0.2, 0.8));
  }
  const double err = srnn_grad_check(p, [&](ad::Tape& tape, const srnn::BoundParams& bp) {
    Rng rng(99);  // reconstructed per call: frozen reparameterization noise
    return srnn::sequence_elbo(tape, bp, seq, rng);
  });
  CHECK(err < 1e-3);
}

TEST_CASE("head gradient checks") {
  srnn::SrnnParams p = srnn::SrnnParams::init(31);
  const Vector4d x(0.4, 0.3, 0.2, 0.6);
  const Vector4d z(0.1, -0.1, 0.2, 0.0);
  const std::vector<Vector4d> prefix = {{0.1, 0.2, 0.3, 0.4}};
  auto with_h = [&](ad::Tape& tape, const srnn::BoundParams& bp) {
    srnn::LstmVarState st = srnn::lstm_initial_state(tape);
    for (const Vector4d& s : prefix) {
      st = srnn::lstm_step(tape, bp, tape.constant(ad::Tensor({4}, {s[0], s[1], s[2], s[3]})), st);
    }
    return st;
  };
  auto c4 = [](ad::Tape& tape, const Vector4d& v) {
    return tape.constant(ad::Tensor({4}, {v[0], v[1], v[2], v[3]}));
  };
  CHECK(srnn_grad_check(p, [&](ad::Tape& tape, const srnn::BoundParams& bp) {
          auto st = with_h(tape, bp);
          return srnn::gaussian_logpdf(tape, c4(tape, x),
                                       srnn::prior_z(tape, bp, st.h, c4(tape, z)));
        }) < 1e-4);
  CHECK(srnn_grad_check(p, [&](ad::Tape& tape, const srnn::BoundParams& bp) {
          auto st = with_h(tape, bp);
          return srnn::gaussian_logpdf(tape, c4(tape, x),
                                       srnn::decode_s(tape, bp, st.h, c4(tape, z)));
        }) < 1e-4);
  CHECK(srnn_grad_check(p, [&](ad::Tape& tape, const srnn::BoundParams& bp) {
          auto st = with_h(tape, bp);
          return srnn::gaussian_logpdf(
              tape, c4(tape, x), srnn::encode_z(tape, bp, st.h, c4(tape, x), c4(tape, z)));
        }) < 1e-4);
}

TEST_CASE("generate") {
  srnn::SrnnParams p = srnn::SrnnParams::init(13);
  const Vector4d seed(0.4, 0.6, 0.5, 0.5);
  {
    Rng rng(4);
    const auto one = srnn::generate(p, seed, 1, rng);
    CHECK(one.size() == 1);
  }
  {
    Rng a(4), b(4);
    const auto r1 = srnn::generate(p, seed, 20, a);
    const auto r2 = srnn::generate(p, seed, 20, b);
    for (int t = 0; t < 20; ++t) CHECK(r1[t] == r2[t]);
  }
}
