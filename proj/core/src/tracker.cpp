#include "dvu/tracker.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <optional>

#include "dvu/error.hpp"
#include "dvu/pretrain.hpp"
#include "dvu/vkf.hpp"

namespace dvu::tracker {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
constexpr double kUnderflowLog = -700.0;
constexpr std::uint64_t kSweepStream = 0x7472616b;

}  // namespace

void SceneData::validate() const {
  if (T < 2) throw DataError("scene: T must be >= 2");
  if (static_cast<int>(detections.size()) != T) {
    throw DataError("scene: detection frames (" + std::to_string(detections.size()) +
                    ") do not match T=" + std::to_string(T));
  }
  if (K1() < 1) throw DataError("scene: no detections at frame 1 (K_1 = 0)");
  for (int t = 0; t < T; ++t) {
    for (const BBox& b : detections[t]) {
      if (!b.valid()) throw DataError("scene: invalid box at frame " + std::to_string(t + 1));
    }
  }
}

void TrackerConfig::validate() const {
  if (!(r_phi > 0.0 && r_phi < 1.0)) throw ConfigError("tracker: r_phi must be in (0, 1)");
  if (init_window < 2) throw ConfigError("tracker: init window J must be >= 2");
  if (iters < 1 || init_iters < 1) throw ConfigError("tracker: iteration counts must be >= 1");
  if (fine_tune && fine_tune_lr <= 0.0) throw ConfigError("tracker: fine_tune_lr must be > 0");
  if (n_objects < 0) throw ConfigError("tracker: n_objects must be >= 0");
}

TrackState TrackState::allocate(int T, int N, bool full) {
  TrackState st;
  st.m.assign(T, std::vector<Eigen::Vector4d>(N, Eigen::Vector4d::Zero()));
  st.V.assign(T, std::vector<Eigen::Vector4d>(N, Eigen::Vector4d::Ones()));
  st.s_sample = st.m;
  st.z_sample = st.m;
  if (full) st.V_full.assign(T, std::vector<Eigen::Matrix4d>(N, Eigen::Matrix4d::Identity()));
  return st;
}

ObservationNoise fixed_phi(const SceneData& scene, double r_phi, bool full) {
  if (!(r_phi > 0.0 && r_phi < 1.0)) throw ConfigError("fixed_phi: r_phi must be in (0, 1)");
  const int K1 = scene.K1();
  const double r2 = r_phi * r_phi;
  auto size_diag = [r2](const BBox& b) {
    const double w = b.width(), h = b.height();
    return Eigen::Vector4d(r2 * w * w, r2 * h * h, r2 * w * w, r2 * h * h);
  };
  std::vector<Eigen::Vector4d> slot(K1);
  for (int k = 0; k < K1; ++k) {
    const BBox& b = scene.detections[0][k];
    if (b.width() <= 0.0 || b.height() <= 0.0) {
      throw DataError("fixed_phi: degenerate frame-1 box at slot " + std::to_string(k));
    }
    slot[k] = size_diag(b);
  }
  ObservationNoise phi;
  phi.full = full;
  phi.diag.resize(scene.T);
  if (full) phi.mat.resize(scene.T);
  for (int t = 0; t < scene.T; ++t) {
    const int Kt = static_cast<int>(scene.detections[t].size());
    phi.diag[t].resize(Kt);
    for (int k = 0; k < Kt; ++k) {
      // Extra slots beyond K_1 fall back to their own frame's detection size.
      phi.diag[t][k] = k < K1 ? slot[k] : size_diag(scene.detections[t][k]);
    }
    if (full) {
      phi.mat[t].resize(Kt);
      for (int k = 0; k < Kt; ++k) phi.mat[t][k] = phi.diag[t][k].asDiagonal();
    }
  }
  return phi;
}

double log_beta(const Eigen::Vector4d& o, const Eigen::Vector4d& m,
                const Eigen::Vector4d& v_diag, const Eigen::Vector4d& phi_diag) {
  double lb = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double diff = o[d] - m[d];
    lb += -0.5 * (kLog2Pi + std::log(phi_diag[d]) + diff * diff / phi_diag[d]);
    lb += -0.5 * v_diag[d] / phi_diag[d];
  }
  return lb;
}

void fuse_diag(const std::vector<BBox>& dets, const Eigen::VectorXd& eta_col,
               const std::vector<Eigen::Vector4d>& phi_diag, const srnn::GaussianDiag& prior,
               Eigen::Vector4d& m_out, Eigen::Vector4d& v_out) {
  const Eigen::Vector4d prior_var = prior.var();
  for (int d = 0; d < 4; ++d) {
    double prec = 1.0 / prior_var[d];
    double lin = prior.mean[d] / prior_var[d];
    for (std::size_t k = 0; k < dets.size(); ++k) {
      const double w = eta_col[static_cast<int>(k)] / phi_diag[k][d];
      prec += w;
      lin += w * dets[k].vec()[d];
    }
    if (!(prec > 0.0) || !std::isfinite(prec)) throw NumericError("fuse: singular precision sum");
    v_out[d] = 1.0 / prec;
    m_out[d] = v_out[d] * lin;
  }
}

namespace {

double log_beta_full(const Eigen::Vector4d& o, const Eigen::Vector4d& m,
                     const Eigen::Matrix4d& v, const Eigen::Matrix4d& phi) {
  const Eigen::LLT<Eigen::Matrix4d> llt(phi);
  if (llt.info() != Eigen::Success) throw NumericError("log_beta: Phi not positive definite");
  const Eigen::Matrix4d L = llt.matrixL();
  double logdet = 0.0;
  for (int d = 0; d < 4; ++d) logdet += 2.0 * std::log(L(d, d));
  const Eigen::Vector4d diff = o - m;
  const double maha = diff.dot(llt.solve(diff));
  const double trace = llt.solve(v).trace();
  return -0.5 * (4.0 * kLog2Pi + logdet + maha) - 0.5 * trace;
}

// Normalized eta row from log betas. Max-subtraction keeps the softmax well
// defined at any distance; rows whose densities all underflow the direct
// domain (every log beta below -700) are counted as diagnostics. A uniform
// fallback only covers non-finite inputs, which the forward path already
// rejects.
bool eta_row(const std::vector<double>& logb, Eigen::VectorXd& out) {
  const int N = static_cast<int>(logb.size());
  double maxlb = logb[0];
  for (double v : logb) maxlb = std::max(maxlb, v);
  out.resize(N);
  if (!std::isfinite(maxlb)) {
    out.setConstant(1.0 / static_cast<double>(N));
    return true;
  }
  double denom = 0.0;
  for (int n = 0; n < N; ++n) {
    out[n] = std::exp(logb[n] - maxlb);
    denom += out[n];
  }
  out /= denom;
  return maxlb < kUnderflowLog;
}

void fuse_full(const std::vector<BBox>& dets, const Eigen::VectorXd& eta_col,
               const std::vector<Eigen::Matrix4d>& phi_mats, const srnn::GaussianDiag& prior,
               Eigen::Vector4d& m_out, Eigen::Matrix4d& v_out) {
  const Eigen::Vector4d prior_var = prior.var();
  Eigen::Matrix4d prec = Eigen::Matrix4d::Zero();
  Eigen::Vector4d lin = Eigen::Vector4d::Zero();
  for (int d = 0; d < 4; ++d) {
    prec(d, d) = 1.0 / prior_var[d];
    lin[d] = prior.mean[d] / prior_var[d];
  }
  for (std::size_t k = 0; k < dets.size(); ++k) {
    const Eigen::Matrix4d inv = phi_mats[k].llt().solve(Eigen::Matrix4d::Identity());
    prec += eta_col[static_cast<int>(k)] * inv;
    lin += eta_col[static_cast<int>(k)] * (inv * dets[k].vec());
  }
  const Eigen::LLT<Eigen::Matrix4d> llt(prec);
  if (llt.info() != Eigen::Success) throw NumericError("fuse: singular precision sum");
  v_out = llt.solve(Eigen::Matrix4d::Identity());
  m_out = v_out * lin;
}

struct SlotInit {
  std::vector<Eigen::Vector4d> v_diag;  // per-object V / Lambda initialization
  std::vector<int> det_slot;            // object -> frame-1 detection slot
};

SlotInit make_slots(const SceneData& scene, const ObservationNoise& phi, int N) {
  SlotInit s;
  const int K1 = scene.K1();
  for (int n = 0; n < N; ++n) {
    const int k = std::min(n, K1 - 1);
    s.det_slot.push_back(k);
    s.v_diag.push_back(phi.diag[0][k]);
  }
  return s;
}

AssignmentPosterior e_w_range(const SceneData& scene, const TrackState& state,
                              const ObservationNoise& phi, int t0, int t1, int N) {
  AssignmentPosterior post;
  post.eta.resize(scene.T);
  for (int t = t0; t < t1; ++t) {
    const int Kt = static_cast<int>(scene.detections[t].size());
    post.eta[t].resize(Kt, N);
    for (int k = 0; k < Kt; ++k) {
      std::vector<double> logb(N);
      for (int n = 0; n < N; ++n) {
        if (phi.full) {
          logb[n] = log_beta_full(scene.detections[t][k].vec(), state.m[t][n],
                                  state.V_full[t][n], phi.mat[t][k]);
        } else {
          logb[n] =
              log_beta(scene.detections[t][k].vec(), state.m[t][n], state.V[t][n], phi.diag[t][k]);
        }
      }
      Eigen::VectorXd row;
      if (eta_row(logb, row)) ++post.underflow_events;
      post.eta[t].row(k) = row.transpose();
    }
  }
  return post;
}

struct SweepCtx {
  const SceneData& scene;
  const ObservationNoise& phi;
  const srnn::SrnnParams* params;  // DVAE dynamics only
  Dynamics dynamics;
  const SlotInit& slots;
  std::uint64_t seed;
};

void fuse_at(const SweepCtx& ctx, int t, int n, const AssignmentPosterior& eta,
             const srnn::GaussianDiag& prior, TrackState& next) {
  const Eigen::VectorXd eta_col(eta.eta[t].col(n));
  if (ctx.phi.full) {
    Eigen::Matrix4d vf;
    fuse_full(ctx.scene.detections[t], eta_col, ctx.phi.mat[t], prior, next.m[t][n], vf);
    next.V_full[t][n] = vf;
    next.V[t][n] = vf.diagonal();
  } else {
    fuse_diag(ctx.scene.detections[t], eta_col, ctx.phi.diag[t], prior, next.m[t][n],
              next.V[t][n]);
  }
}

void sample_s_at(const SweepCtx& ctx, int t, int n, const Eigen::Vector4d& eps,
                 TrackState& next) {
  if (ctx.phi.full) {
    const Eigen::LLT<Eigen::Matrix4d> llt(next.V_full[t][n]);
    if (llt.info() != Eigen::Success) throw NumericError("sample_s: V not positive definite");
    next.s_sample[t][n] = next.m[t][n] + Eigen::Matrix4d(llt.matrixL()) * eps;
  } else {
    for (int d = 0; d < 4; ++d) {
      next.s_sample[t][n][d] = next.m[t][n][d] + std::sqrt(next.V[t][n][d]) * eps[d];
    }
  }
}

// Joint E-Z/E-S sweep for one object: for each frame, encode with the
// previous-iteration s and current z chain, sample z, decode with the
// current-iteration s, fuse with the weighted detections, sample s.
void sweep_object_dvae(const SweepCtx& ctx, int t0, int t1, int n, const AssignmentPosterior& eta,
                       const TrackState& prev, TrackState& next, std::uint64_t phase, int iter) {
  Rng rng = Rng::stream(ctx.seed, {kSweepStream, phase, static_cast<std::uint64_t>(iter),
                                   static_cast<std::uint64_t>(n)});
  const srnn::SrnnParams& p = *ctx.params;
  srnn::LstmState enc{}, dec{};
  Eigen::Vector4d z_prev = Eigen::Vector4d::Zero();
  const Eigen::Vector4d zero = Eigen::Vector4d::Zero();
  for (int t = t0; t < t1; ++t) {
    lstm_step(p, t == t0 ? zero : prev.s_sample[t - 1][n], enc);
    const srnn::GaussianDiag q = encode_z(p, enc, prev.s_sample[t][n], z_prev);
    const Eigen::Vector4d z_t = reparam_sample(q, rng);
    lstm_step(p, t == t0 ? zero : next.s_sample[t - 1][n], dec);
    const srnn::GaussianDiag ps = decode_s(p, dec, z_t);
    fuse_at(ctx, t, n, eta, ps, next);
    sample_s_at(ctx, t, n, rng.normal4(), next);
    next.z_sample[t][n] = z_t;
    z_prev = z_t;
  }
}

// Same sweep with the constant-velocity prediction as the prior; velocities
// come from the previous iteration's consecutive means, so no sampling.
void sweep_object_linear(const SweepCtx& ctx, int t0, int t1, int n,
                         const AssignmentPosterior& eta, const TrackState& prev,
                         TrackState& next) {
  const vkf::LinearDynParams ldp = vkf::LinearDynParams::make(ctx.slots.v_diag[n]);
  for (int t = t0; t < t1; ++t) {
    srnn::GaussianDiag pred;
    if (t == t0) {
      pred.mean = prev.m[t][n];
      pred.logvar = ctx.slots.v_diag[n].array().log();
    } else {
      vkf::LinearState st;
      st.mean << next.m[t - 1][n], (prev.m[t][n] - prev.m[t - 1][n]);
      st.cov_diag << next.V[t - 1][n], ctx.slots.v_diag[n];
      pred = vkf::vkf_predict(ldp, st);
    }
    fuse_at(ctx, t, n, eta, pred, next);
    next.s_sample[t][n] = next.m[t][n];
  }
}

// Eq-33-style objective on the tape with frozen samples; both LSTM streams
// rebuilt exactly as the sweep ran them.
ad::Var build_finetune_objective(ad::Tape& tape, const srnn::BoundParams& bp, int t0, int t1,
                                 int N, const TrackState& prev, const TrackState& cur) {
  auto c4 = [&](const Eigen::Vector4d& v) {
    return tape.constant_vec(std::span<const double>(v.data(), 4));
  };
  ad::Var total = tape.constant_scalar(0.0);
  const double zeros4[4] = {};
  const ad::Var zero4 = tape.constant_vec(std::span<const double>(zeros4, 4));
  for (int n = 0; n < N; ++n) {
    srnn::LstmVarState enc = srnn::lstm_initial_state(tape);
    srnn::LstmVarState dec = srnn::lstm_initial_state(tape);
    for (int t = t0; t < t1; ++t) {
      const ad::Var z_prev = t == t0 ? zero4 : c4(cur.z_sample[t - 1][n]);
      enc = srnn::lstm_step(tape, bp, t == t0 ? zero4 : c4(prev.s_sample[t - 1][n]), enc);
      dec = srnn::lstm_step(tape, bp, t == t0 ? zero4 : c4(cur.s_sample[t - 1][n]), dec);
      const srnn::GaussVar q = srnn::encode_z(tape, bp, enc.h, c4(prev.s_sample[t][n]), z_prev);
      const srnn::GaussVar pz = srnn::prior_z(tape, bp, dec.h, z_prev);
      const srnn::GaussVar ps = srnn::decode_s(tape, bp, dec.h, c4(cur.z_sample[t][n]));
      const ad::Var ll = srnn::gaussian_logpdf(tape, c4(cur.s_sample[t][n]), ps);
      const ad::Var kl = srnn::kl_diag(tape, q, pz);
      total = tape.add(total, tape.sub(ll, kl));
    }
  }
  return total;
}

void m_step_range(const SceneData& scene, const AssignmentPosterior& eta, const TrackState& state,
                  int t0, int t1, int N, ObservationNoise& phi) {
  const bool has_full = !state.V_full.empty();
  for (int t = t0; t < t1; ++t) {
    const int Kt = static_cast<int>(scene.detections[t].size());
    for (int k = 0; k < Kt; ++k) {
      Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
      for (int n = 0; n < N; ++n) {
        const Eigen::Vector4d diff = scene.detections[t][k].vec() - state.m[t][n];
        const Eigen::Matrix4d vn =
            has_full ? state.V_full[t][n] : Eigen::Matrix4d(state.V[t][n].asDiagonal());
        acc += eta.eta[t](k, n) * (diff * diff.transpose() + vn);
      }
      // Floor to positive definite.
      double eps = 1e-8;
      for (int tries = 0; tries < 10; ++tries) {
        if (Eigen::LLT<Eigen::Matrix4d>(acc).info() == Eigen::Success) break;
        acc += eps * Eigen::Matrix4d::Identity();
        eps *= 10.0;
      }
      phi.mat[t][k] = acc;
      phi.diag[t][k] = acc.diagonal();
    }
  }
}

// State, noise and fine-tuned parameters of one tracking run.
class EmEngine {
 public:
  EmEngine(const SceneData& scene, const TrackerConfig& cfg, const srnn::SrnnParams* params)
      : scene_(scene), cfg_(cfg), N_(cfg.n_objects > 0 ? cfg.n_objects : scene.K1()) {
    if (cfg_.dynamics == Dynamics::kDvae) {
      if (!params) throw ConfigError("tracker: DVAE dynamics requires model parameters");
      params_ = *params;
    } else {
      params_ = srnn::SrnnParams::zeros();
    }
    phi_init_ = fixed_phi(scene_, cfg_.r_phi, cfg_.m_step_phi);
    phi_ = phi_init_;
    slots_ = make_slots(scene_, phi_init_, N_);
    if (cfg_.fine_tune && cfg_.dynamics == Dynamics::kDvae) {
      ft_adam_.emplace(pretrain::AdamConfig{cfg_.fine_tune_lr, 0.9, 0.999, 1e-8},
                       params_.param_count());
    }
  }

  int n_objects() const { return N_; }
  const SlotInit& slots() const { return slots_; }
  const srnn::SrnnParams& params() const { return params_; }
  long long underflow_events() const { return underflow_events_; }
  long long fine_tune_skips() const { return fine_tune_skips_; }

  void run(int t0, int t1, int iters, std::uint64_t phase, TrackState& state,
           AssignmentPosterior* eta_out, std::vector<IterationDiagnostics>* diags,
           std::vector<std::vector<std::vector<Eigen::Vector4d>>>* history) {
    if (cfg_.m_step_phi) phi_ = phi_init_;  // each run restarts from the fixed values
    for (int it = 1; it <= iters; ++it) {
      AssignmentPosterior eta = e_w_range(scene_, state, phi_, t0, t1, N_);
      underflow_events_ += eta.underflow_events;
      TrackState next = state;
      const SweepCtx ctx{scene_, phi_, &params_, cfg_.dynamics, slots_, cfg_.seed};
      for (int n = 0; n < N_; ++n) {
        if (cfg_.dynamics == Dynamics::kDvae) {
          sweep_object_dvae(ctx, t0, t1, n, eta, state, next, phase, it);
        } else {
          sweep_object_linear(ctx, t0, t1, n, eta, state, next);
        }
      }
      if (cfg_.fine_tune && cfg_.dynamics == Dynamics::kDvae) fine_tune_step(t0, t1, state, next);
      if (cfg_.m_step_phi) m_step_range(scene_, eta, next, t0, t1, N_, phi_);
      if (diags) diags->push_back(diagnostics(t0, t1, eta, state, next));
      state = std::move(next);
      if (history) history->emplace_back(state.m.begin() + t0, state.m.begin() + t1);
      if (eta_out && it == iters) *eta_out = std::move(eta);
    }
  }

 private:
  // One ascent step on the Monte Carlo ELBO with this iteration's frozen
  // samples; gradients flow through the network parameters only.
  void fine_tune_step(int t0, int t1, const TrackState& prev, const TrackState& cur) {
    try {
      ad::Tape tape;
      const srnn::BoundParams bp = srnn::bind(tape, params_, /*trainable=*/true);
      const ad::Var total = build_finetune_objective(tape, bp, t0, t1, N_, prev, cur);
      tape.backward(tape.neg(total));  // ascend the objective
      std::vector<double> grad;
      grad.reserve(params_.param_count());
      for (const ad::Var& v : bp.all()) {
        const ad::Tensor& g = tape.grad(v);
        grad.insert(grad.end(), g.data.begin(), g.data.end());
      }
      std::vector<double> flat = params_.flatten();
      ft_adam_->step(flat, grad);
      params_.unflatten(flat);
    } catch (const NumericError&) {
      ++fine_tune_skips_;  // non-finite objective: skip this update
    }
  }

  IterationDiagnostics diagnostics(int t0, int t1, const AssignmentPosterior& eta,
                                   const TrackState& prev, const TrackState& cur) const {
    IterationDiagnostics d;
    double ent = 0.0;
    long long rows = 0;
    for (int t = t0; t < t1; ++t) {
      for (int k = 0; k < eta.eta[t].rows(); ++k) {
        for (int n = 0; n < N_; ++n) {
          const double p = eta.eta[t](k, n);
          if (p > 0.0) ent -= p * std::log(p);
        }
        ++rows;
      }
    }
    d.mean_entropy = rows ? ent / static_cast<double>(rows) : 0.0;
    double move = 0.0;
    for (int t = t0; t < t1; ++t) {
      for (int n = 0; n < N_; ++n) move += (cur.m[t][n] - prev.m[t][n]).norm();
    }
    d.mean_move = move / (static_cast<double>(t1 - t0) * N_);
    return d;
  }

  const SceneData& scene_;
  TrackerConfig cfg_;
  srnn::SrnnParams params_;
  ObservationNoise phi_init_;
  ObservationNoise phi_;
  SlotInit slots_;
  int N_;
  std::optional<pretrain::Adam> ft_adam_;
  long long underflow_events_ = 0;
  long long fine_tune_skips_ = 0;
};

std::vector<std::pair<int, int>> split_windows(int T, int J) {
  std::vector<std::pair<int, int>> w;
  for (int t0 = 0; t0 < T; t0 += J) w.emplace_back(t0, std::min(T, t0 + J));
  return w;
}

TrackState cascade_init_impl(const SceneData& scene, EmEngine& engine, const TrackerConfig& cfg) {
  const int N = engine.n_objects();
  TrackState init = TrackState::allocate(scene.T, N, cfg.m_step_phi);
  for (int t = 0; t < scene.T; ++t) {
    for (int n = 0; n < N; ++n) {
      init.V[t][n] = engine.slots().v_diag[n];
      if (cfg.m_step_phi) init.V_full[t][n] = engine.slots().v_diag[n].asDiagonal();
    }
  }

  const auto windows = split_windows(scene.T, cfg.init_window);
  std::vector<Eigen::Vector4d> start(N);
  for (int n = 0; n < N; ++n) start[n] = scene.detections[0][engine.slots().det_slot[n]].vec();

  for (std::size_t j = 0; j < windows.size(); ++j) {
    const auto [t0, t1] = windows[j];
    for (int n = 0; n < N; ++n) {
      for (int t = t0; t < t1; ++t) {
        init.m[t][n] = start[n];
        init.s_sample[t][n] = start[n];
      }
    }
    if (j + 1 == windows.size()) break;
    // Refine a copy of this window to learn its endpoint; the constant init
    // itself is what gets returned.
    TrackState work = init;
    engine.run(t0, t1, cfg.init_iters, /*phase=*/j + 1, work, nullptr, nullptr, nullptr);
    for (int n = 0; n < N; ++n) {
      Eigen::Vector4d endpoint = work.m[t1 - 1][n];
      if (cfg.dynamics == Dynamics::kLinear && t1 - t0 >= 2) {
        // Seed the next window with one step of the linear model.
        endpoint += work.m[t1 - 1][n] - work.m[t1 - 2][n];
      }
      start[n] = endpoint;
    }
  }
  return init;
}

}  // namespace

AssignmentPosterior e_w_step(const SceneData& scene, const TrackState& state,
                             const ObservationNoise& phi) {
  const int N = static_cast<int>(state.m.empty() ? 0 : state.m[0].size());
  return e_w_range(scene, state, phi, 0, scene.T, N);
}

TrackState e_s_step(const SceneData& scene, const AssignmentPosterior& eta,
                    const ObservationNoise& phi, const srnn::SrnnParams& params,
                    const TrackState& prev, std::uint64_t seed, int iteration) {
  const int N = static_cast<int>(prev.m[0].size());
  TrackState next = prev;
  SlotInit slots = make_slots(scene, phi, N);
  const SweepCtx ctx{scene, phi, &params, Dynamics::kDvae, slots, seed};
  for (int n = 0; n < N; ++n) {
    sweep_object_dvae(ctx, 0, scene.T, n, eta, prev, next, /*phase=*/0, iteration);
  }
  return next;
}

ObservationNoise m_step_phi(const SceneData& scene, const AssignmentPosterior& eta,
                            const TrackState& state) {
  ObservationNoise phi;
  phi.full = true;
  phi.diag.resize(scene.T);
  phi.mat.resize(scene.T);
  for (int t = 0; t < scene.T; ++t) {
    const int Kt = static_cast<int>(scene.detections[t].size());
    phi.diag[t].resize(Kt);
    phi.mat[t].resize(Kt);
  }
  const int N = static_cast<int>(state.m[0].size());
  m_step_range(scene, eta, state, 0, scene.T, N, phi);
  return phi;
}

double finetune_objective(const SceneData& scene, const srnn::SrnnParams& params,
                          const TrackState& prev, const TrackState& cur,
                          std::vector<double>* grad_out) {
  const int N = static_cast<int>(prev.m[0].size());
  ad::Tape tape;
  const srnn::BoundParams bp = srnn::bind(tape, params, /*trainable=*/grad_out != nullptr);
  const ad::Var total = build_finetune_objective(tape, bp, 0, scene.T, N, prev, cur);
  if (grad_out) {
    tape.backward(total);
    grad_out->clear();
    for (const ad::Var& v : bp.all()) {
      const ad::Tensor& g = tape.grad(v);
      grad_out->insert(grad_out->end(), g.data.begin(), g.data.end());
    }
  }
  return total.value().data[0];
}

srnn::SrnnParams e_z_finetune(const SceneData& scene, const TrackState& prev,
                              const TrackState& cur, const srnn::SrnnParams& params,
                              const TrackerConfig& cfg) {
  if (!cfg.fine_tune) return params;
  try {
    std::vector<double> grad;
    finetune_objective(scene, params, prev, cur, &grad);
    for (double& g : grad) g = -g;  // ascend
    std::vector<double> flat = params.flatten();
    pretrain::Adam adam({cfg.fine_tune_lr, 0.9, 0.999, 1e-8}, flat.size());
    adam.step(flat, grad);
    srnn::SrnnParams out = params;
    out.unflatten(flat);
    return out;
  } catch (const NumericError&) {
    return params;  // non-finite objective: skip the update
  }
}

TrackState cascade_init(const SceneData& scene, const srnn::SrnnParams* params,
                        const TrackerConfig& cfg, const ObservationNoise& /*phi*/) {
  scene.validate();
  cfg.validate();
  EmEngine engine(scene, cfg, params);
  return cascade_init_impl(scene, engine, cfg);
}

TrackResult track(const SceneData& scene, const srnn::SrnnParams* params,
                  const TrackerConfig& cfg) {
  scene.validate();
  cfg.validate();
  EmEngine engine(scene, cfg, params);
  const int N = engine.n_objects();

  TrackState state = cascade_init_impl(scene, engine, cfg);

  TrackResult result;
  result.n_objects = N;
  engine.run(0, scene.T, cfg.iters, /*phase=*/0, state, &result.eta, &result.iterations,
             cfg.record_history ? &result.m_history : nullptr);
  result.state = std::move(state);
  result.underflow_events = engine.underflow_events();
  if (cfg.fine_tune && cfg.dynamics == Dynamics::kDvae) {
    result.params_tuned = true;
    result.tuned_params = engine.params();
  }

  result.hard_assignment.resize(scene.T);
  for (int t = 0; t < scene.T; ++t) {
    const int Kt = static_cast<int>(scene.detections[t].size());
    result.hard_assignment[t].resize(Kt);
    for (int k = 0; k < Kt; ++k) {
      int best = 0;
      for (int n = 1; n < N; ++n) {
        if (result.eta.eta[t](k, n) > result.eta.eta[t](k, best)) best = n;
      }
      result.hard_assignment[t][k] = best;
    }
  }
  return result;
}

}  // namespace dvu::tracker
