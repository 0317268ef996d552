#include "dvu/srnn.hpp"

#include <cmath>
#include <span>

#include "dvu/error.hpp"

namespace dvu::srnn {

namespace {

constexpr int kGateDim = 4 * kHiddenDim;

ad::Var const4(ad::Tape& tape, const Eigen::Vector4d& v) {
  return tape.constant_vec(std::span<const double>(v.data(), 4));
}

Eigen::Vector4d to_vec4(const ad::Tensor& t) {
  return {t.data[0], t.data[1], t.data[2], t.data[3]};
}

// out[i] = (sum_k w(i,k) * in[k]) + b[i], with the same accumulation order as
// the tape matmul so both paths agree bit-for-bit.
void affine(const ad::Tensor& w, const ad::Tensor& b, const double* in, double* out) {
  const std::size_t m = w.rows(), k = w.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += w.data[i * k + p] * in[p];
    out[i] = acc + b.data[i];
  }
}

double clamp_lv(double x) { return std::min(kLogVarMax, std::max(kLogVarMin, x)); }

GaussianDiag split_head(const double* out8) {
  GaussianDiag g;
  for (int d = 0; d < 4; ++d) {
    g.mean[d] = out8[d];
    g.logvar[d] = clamp_lv(out8[4 + d]);
  }
  return g;
}

}  // namespace

SrnnParams SrnnParams::zeros() {
  SrnnParams p;
  p.lstm_w_ih = ad::Tensor::zeros({kGateDim, kBoxDim});
  p.lstm_w_hh = ad::Tensor::zeros({kGateDim, kHiddenDim});
  p.lstm_b = ad::Tensor::zeros({kGateDim});
  p.dz0_w = ad::Tensor::zeros({8, 12});
  p.dz0_b = ad::Tensor::zeros({8});
  p.dz1_w = ad::Tensor::zeros({8, 8});
  p.dz1_b = ad::Tensor::zeros({8});
  p.dz2_w = ad::Tensor::zeros({8, 8});
  p.dz2_b = ad::Tensor::zeros({8});
  p.ds0_w = ad::Tensor::zeros({16, 12});
  p.ds0_b = ad::Tensor::zeros({16});
  p.ds1_w = ad::Tensor::zeros({8, 16});
  p.ds1_b = ad::Tensor::zeros({8});
  p.ez0_w = ad::Tensor::zeros({16, 16});
  p.ez0_b = ad::Tensor::zeros({16});
  p.ez1_w = ad::Tensor::zeros({8, 16});
  p.ez1_b = ad::Tensor::zeros({8});
  p.ez2_w = ad::Tensor::zeros({8, 8});
  p.ez2_b = ad::Tensor::zeros({8});
  return p;
}

SrnnParams SrnnParams::init(std::uint64_t seed) {
  SrnnParams p = zeros();
  Rng rng = Rng::stream(seed, {0x5e1f});
  for (auto& [name, t] : p.named()) {
    if (t->rank() != 2) continue;  // biases stay zero
    const double bound = 1.0 / std::sqrt(static_cast<double>(t->cols()));
    for (double& v : t->data) v = rng.uniform(-bound, bound);
  }
  return p;
}

std::vector<std::pair<std::string, ad::Tensor*>> SrnnParams::named() {
  return {
      {"lstm.w_ih", &lstm_w_ih}, {"lstm.w_hh", &lstm_w_hh}, {"lstm.b", &lstm_b},
      {"dz.0.w", &dz0_w},        {"dz.0.b", &dz0_b},        {"dz.1.w", &dz1_w},
      {"dz.1.b", &dz1_b},        {"dz.2.w", &dz2_w},        {"dz.2.b", &dz2_b},
      {"ds.0.w", &ds0_w},        {"ds.0.b", &ds0_b},        {"ds.1.w", &ds1_w},
      {"ds.1.b", &ds1_b},        {"ez.0.w", &ez0_w},        {"ez.0.b", &ez0_b},
      {"ez.1.w", &ez1_w},        {"ez.1.b", &ez1_b},        {"ez.2.w", &ez2_w},
      {"ez.2.b", &ez2_b},
  };
}

std::vector<std::pair<std::string, const ad::Tensor*>> SrnnParams::named() const {
  std::vector<std::pair<std::string, const ad::Tensor*>> out;
  for (auto& [name, t] : const_cast<SrnnParams*>(this)->named()) out.emplace_back(name, t);
  return out;
}

std::size_t SrnnParams::param_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : named()) n += t->size();
  return n;
}

std::vector<double> SrnnParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (auto& [name, t] : named()) flat.insert(flat.end(), t->data.begin(), t->data.end());
  return flat;
}

void SrnnParams::unflatten(std::span<const double> flat) {
  std::size_t off = 0;
  for (auto& [name, t] : named()) {
    if (off + t->size() > flat.size()) throw ShapeError("unflatten: flat vector too short");
    std::copy(flat.begin() + off, flat.begin() + off + t->size(), t->data.begin());
    off += t->size();
  }
  if (off != flat.size()) throw ShapeError("unflatten: flat vector size mismatch");
}

// ---------------------------------------------------------------------------
// Tape path
// ---------------------------------------------------------------------------

std::vector<ad::Var> BoundParams::all() const {
  return {lstm_w_ih, lstm_w_hh, lstm_b, dz0_w, dz0_b, dz1_w, dz1_b, dz2_w, dz2_b,
          ds0_w,     ds0_b,     ds1_w,  ds1_b, ez0_w, ez0_b, ez1_w, ez1_b, ez2_w, ez2_b};
}

BoundParams bind(ad::Tape& tape, const SrnnParams& p, bool trainable) {
  auto put = [&](const ad::Tensor& t) { return trainable ? tape.param(t) : tape.constant(t); };
  BoundParams b;
  b.lstm_w_ih = put(p.lstm_w_ih);
  b.lstm_w_hh = put(p.lstm_w_hh);
  b.lstm_b = put(p.lstm_b);
  b.dz0_w = put(p.dz0_w);
  b.dz0_b = put(p.dz0_b);
  b.dz1_w = put(p.dz1_w);
  b.dz1_b = put(p.dz1_b);
  b.dz2_w = put(p.dz2_w);
  b.dz2_b = put(p.dz2_b);
  b.ds0_w = put(p.ds0_w);
  b.ds0_b = put(p.ds0_b);
  b.ds1_w = put(p.ds1_w);
  b.ds1_b = put(p.ds1_b);
  b.ez0_w = put(p.ez0_w);
  b.ez0_b = put(p.ez0_b);
  b.ez1_w = put(p.ez1_w);
  b.ez1_b = put(p.ez1_b);
  b.ez2_w = put(p.ez2_w);
  b.ez2_b = put(p.ez2_b);
  return b;
}

SrnnParams collect_grads(const ad::Tape& tape, const BoundParams& bp) {
  SrnnParams g = SrnnParams::zeros();
  auto vars = bp.all();
  std::size_t i = 0;
  for (auto& [name, t] : g.named()) *t = tape.grad(vars[i++]);
  return g;
}

LstmVarState lstm_initial_state(ad::Tape& tape) {
  const double zeros[kHiddenDim] = {};
  return {tape.constant_vec(std::span<const double>(zeros, kHiddenDim)),
          tape.constant_vec(std::span<const double>(zeros, kHiddenDim))};
}

LstmVarState lstm_step(ad::Tape& tape, const BoundParams& bp, ad::Var s_prev,
                       const LstmVarState& st) {
  ad::Var pre = tape.add(tape.add(tape.matmul(bp.lstm_w_ih, s_prev),
                                  tape.matmul(bp.lstm_w_hh, st.h)),
                         bp.lstm_b);
  ad::Var gi = tape.sigmoid(tape.slice(pre, 0, kHiddenDim));
  ad::Var gf = tape.sigmoid(tape.slice(pre, kHiddenDim, kHiddenDim));
  ad::Var gg = tape.tanh(tape.slice(pre, 2 * kHiddenDim, kHiddenDim));
  ad::Var go = tape.sigmoid(tape.slice(pre, 3 * kHiddenDim, kHiddenDim));
  ad::Var c = tape.add(tape.mul(gf, st.c), tape.mul(gi, gg));
  ad::Var h = tape.mul(go, tape.tanh(c));
  return {h, c};
}

namespace {

GaussVar split_head_var(ad::Tape& tape, ad::Var out8) {
  GaussVar g;
  g.mean = tape.slice(out8, 0, 4);
  g.logvar = tape.clamp(tape.slice(out8, 4, 4), kLogVarMin, kLogVarMax);
  return g;
}

}  // namespace

GaussVar prior_z(ad::Tape& tape, const BoundParams& bp, ad::Var h, ad::Var z_prev) {
  const std::array<ad::Var, 2> parts = {h, z_prev};
  ad::Var in = tape.concat(parts);
  ad::Var l0 = tape.tanh(tape.affine(bp.dz0_w, in, bp.dz0_b));
  ad::Var l1 = tape.tanh(tape.affine(bp.dz1_w, l0, bp.dz1_b));
  return split_head_var(tape, tape.affine(bp.dz2_w, l1, bp.dz2_b));
}

GaussVar decode_s(ad::Tape& tape, const BoundParams& bp, ad::Var h, ad::Var z) {
  const std::array<ad::Var, 2> parts = {h, z};
  ad::Var in = tape.concat(parts);
  ad::Var l0 = tape.tanh(tape.affine(bp.ds0_w, in, bp.ds0_b));
  return split_head_var(tape, tape.affine(bp.ds1_w, l0, bp.ds1_b));
}

GaussVar encode_z(ad::Tape& tape, const BoundParams& bp, ad::Var h, ad::Var s_t,
                  ad::Var z_prev) {
  const std::array<ad::Var, 3> parts = {h, s_t, z_prev};
  ad::Var in = tape.concat(parts);
  ad::Var l0 = tape.tanh(tape.affine(bp.ez0_w, in, bp.ez0_b));
  ad::Var l1 = tape.tanh(tape.affine(bp.ez1_w, l0, bp.ez1_b));
  return split_head_var(tape, tape.affine(bp.ez2_w, l1, bp.ez2_b));
}

ad::Var reparam_sample(ad::Tape& tape, const GaussVar& g, const Eigen::Vector4d& eps) {
  ad::Var half_lv = tape.mul(tape.constant_scalar(0.5), g.logvar);
  ad::Var sd = tape.exp(half_lv);
  ad::Var scaled = tape.mul(sd, const4(tape, eps));
  return tape.add(g.mean, scaled);
}

ad::Var gaussian_logpdf(ad::Tape& tape, ad::Var x, const GaussVar& g) {
  ad::Var diff = tape.sub(x, g.mean);
  ad::Var quad = tape.mul(tape.mul(diff, diff), tape.exp(tape.neg(g.logvar)));
  ad::Var terms = tape.add(g.logvar, quad);
  ad::Var s = tape.sum(terms);
  ad::Var half = tape.mul(tape.constant_scalar(-0.5), s);
  return tape.add(half, tape.constant_scalar(-2.0 * std::log(2.0 * M_PI)));
}

ad::Var kl_diag(ad::Tape& tape, const GaussVar& q, const GaussVar& p) {
  ad::Var dlv = tape.sub(p.logvar, q.logvar);
  ad::Var ratio = tape.exp(tape.neg(dlv));
  ad::Var md = tape.sub(q.mean, p.mean);
  ad::Var quad = tape.mul(tape.mul(md, md), tape.exp(tape.neg(p.logvar)));
  ad::Var terms = tape.add(tape.add(dlv, ratio), quad);
  ad::Var s = tape.sum(terms);
  ad::Var shifted = tape.add(s, tape.constant_scalar(-4.0));
  return tape.mul(tape.constant_scalar(0.5), shifted);
}

ad::Var sequence_elbo(ad::Tape& tape, const BoundParams& bp,
                      const std::vector<Eigen::Vector4d>& s_seq, Rng& rng) {
  const int T = static_cast<int>(s_seq.size());
  if (T < 2) throw ConfigError("sequence_elbo: sequence length must be >= 2");
  LstmVarState st = lstm_initial_state(tape);
  const double zeros4[4] = {};
  ad::Var z_prev = tape.constant_vec(std::span<const double>(zeros4, 4));
  ad::Var loss = tape.constant_scalar(0.0);
  Eigen::Vector4d s_prev = Eigen::Vector4d::Zero();
  for (int t = 0; t < T; ++t) {
    try {
      st = lstm_step(tape, bp, const4(tape, s_prev), st);
      ad::Var s_t = const4(tape, s_seq[t]);
      GaussVar q = encode_z(tape, bp, st.h, s_t, z_prev);
      ad::Var z_t = reparam_sample(tape, q, rng.normal4());
      GaussVar pz = prior_z(tape, bp, st.h, z_prev);
      GaussVar ps = decode_s(tape, bp, st.h, z_t);
      ad::Var nll = tape.neg(gaussian_logpdf(tape, s_t, ps));
      ad::Var kl = kl_diag(tape, q, pz);
      loss = tape.add(loss, tape.add(nll, kl));
      z_prev = z_t;
      s_prev = s_seq[t];
    } catch (const NumericError& e) {
      throw NumericError("sequence_elbo: non-finite loss at frame " + std::to_string(t + 1) +
                         ": " + e.what());
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Plain forward path
// ---------------------------------------------------------------------------

void lstm_step(const SrnnParams& p, const Eigen::Vector4d& s_prev, LstmState& st) {
  double a[kGateDim], b[kGateDim], pre[kGateDim];
  for (std::size_t i = 0; i < kGateDim; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < kBoxDim; ++k) acc += p.lstm_w_ih.data[i * kBoxDim + k] * s_prev[k];
    a[i] = acc;
  }
  for (std::size_t i = 0; i < kGateDim; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < kHiddenDim; ++k)
      acc += p.lstm_w_hh.data[i * kHiddenDim + k] * st.h[k];
    b[i] = acc;
  }
  for (std::size_t i = 0; i < kGateDim; ++i) pre[i] = (a[i] + b[i]) + p.lstm_b.data[i];
  for (int j = 0; j < kHiddenDim; ++j) {
    const double gi = 1.0 / (1.0 + std::exp(-pre[j]));
    const double gf = 1.0 / (1.0 + std::exp(-pre[kHiddenDim + j]));
    const double gg = std::tanh(pre[2 * kHiddenDim + j]);
    const double go = 1.0 / (1.0 + std::exp(-pre[3 * kHiddenDim + j]));
    const double c = gf * st.c[j] + gi * gg;
    st.c[j] = c;
    st.h[j] = go * std::tanh(c);
  }
}

GaussianDiag prior_z(const SrnnParams& p, const LstmState& st, const Eigen::Vector4d& z_prev) {
  double in[12];
  for (int j = 0; j < kHiddenDim; ++j) in[j] = st.h[j];
  for (int d = 0; d < 4; ++d) in[kHiddenDim + d] = z_prev[d];
  double l0[8], l1[8], out[8];
  affine(p.dz0_w, p.dz0_b, in, l0);
  for (double& v : l0) v = std::tanh(v);
  affine(p.dz1_w, p.dz1_b, l0, l1);
  for (double& v : l1) v = std::tanh(v);
  affine(p.dz2_w, p.dz2_b, l1, out);
  return split_head(out);
}

GaussianDiag decode_s(const SrnnParams& p, const LstmState& st, const Eigen::Vector4d& z) {
  double in[12];
  for (int j = 0; j < kHiddenDim; ++j) in[j] = st.h[j];
  for (int d = 0; d < 4; ++d) in[kHiddenDim + d] = z[d];
  double l0[16], out[8];
  affine(p.ds0_w, p.ds0_b, in, l0);
  for (double& v : l0) v = std::tanh(v);
  affine(p.ds1_w, p.ds1_b, l0, out);
  return split_head(out);
}

GaussianDiag encode_z(const SrnnParams& p, const LstmState& st, const Eigen::Vector4d& s_t,
                      const Eigen::Vector4d& z_prev) {
  double in[16];
  for (int j = 0; j < kHiddenDim; ++j) in[j] = st.h[j];
  for (int d = 0; d < 4; ++d) in[kHiddenDim + d] = s_t[d];
  for (int d = 0; d < 4; ++d) in[kHiddenDim + 4 + d] = z_prev[d];
  double l0[16], l1[8], out[8];
  affine(p.ez0_w, p.ez0_b, in, l0);
  for (double& v : l0) v = std::tanh(v);
  affine(p.ez1_w, p.ez1_b, l0, l1);
  for (double& v : l1) v = std::tanh(v);
  affine(p.ez2_w, p.ez2_b, l1, out);
  return split_head(out);
}

Eigen::Vector4d reparam_sample(const GaussianDiag& g, Rng& rng) {
  Eigen::Vector4d out;
  const Eigen::Vector4d eps = rng.normal4();
  for (int d = 0; d < 4; ++d) out[d] = g.mean[d] + std::exp(0.5 * g.logvar[d]) * eps[d];
  return out;
}

double gaussian_logpdf(const Eigen::Vector4d& x, const GaussianDiag& g) {
  double acc = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double diff = x[d] + (-g.mean[d]);
    const double quad = (diff * diff) * std::exp(-g.logvar[d]);
    acc += g.logvar[d] + quad;
  }
  return (-0.5 * acc) + (-2.0 * std::log(2.0 * M_PI));
}

double kl_diag(const GaussianDiag& q, const GaussianDiag& p) {
  double acc = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double dlv = p.logvar[d] + (-q.logvar[d]);
    const double ratio = std::exp(-dlv);
    const double md = q.mean[d] + (-p.mean[d]);
    const double quad = (md * md) * std::exp(-p.logvar[d]);
    acc += (dlv + ratio) + quad;
  }
  return std::max(0.0, 0.5 * (acc + (-4.0)));
}

std::vector<Eigen::Vector4d> generate(const SrnnParams& p, const Eigen::Vector4d& s_seed,
                                      int T, Rng& rng) {
  std::vector<Eigen::Vector4d> out;
  out.reserve(T);
  LstmState st;
  Eigen::Vector4d z_prev = Eigen::Vector4d::Zero();
  Eigen::Vector4d s_prev = s_seed;
  for (int t = 0; t < T; ++t) {
    lstm_step(p, s_prev, st);
    const GaussianDiag pz = prior_z(p, st, z_prev);
    const Eigen::Vector4d z = reparam_sample(pz, rng);
    const GaussianDiag ps = decode_s(p, st, z);
    out.push_back(ps.mean);
    s_prev = ps.mean;
    z_prev = z;
  }
  return out;
}

double one_step_rmse(const SrnnParams& p, const std::vector<Eigen::Vector4d>& s_seq) {
  LstmState st;
  Eigen::Vector4d z_prev = Eigen::Vector4d::Zero();
  double sq = 0.0;
  int count = 0;
  for (std::size_t t = 0; t < s_seq.size(); ++t) {
    lstm_step(p, t == 0 ? Eigen::Vector4d::Zero().eval() : s_seq[t - 1], st);
    // Predict s_t before it is revealed: z_t from the latent prior.
    const GaussianDiag pz = prior_z(p, st, z_prev);
    const GaussianDiag ps = decode_s(p, st, pz.mean);
    if (t >= 1) {
      sq += (ps.mean - s_seq[t]).squaredNorm();
      count += 4;
    }
    // Then filter the latent with the revealed frame.
    z_prev = encode_z(p, st, s_seq[t], z_prev).mean;
  }
  return count ? std::sqrt(sq / count) : 0.0;
}

double constant_position_rmse(const std::vector<Eigen::Vector4d>& s_seq) {
  double sq = 0.0;
  int count = 0;
  for (std::size_t t = 1; t < s_seq.size(); ++t) {
    sq += (s_seq[t - 1] - s_seq[t]).squaredNorm();
    count += 4;
  }
  return count ? std::sqrt(sq / count) : 0.0;
}

}  // namespace dvu::srnn
