#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "dvu/bbox.hpp"
#include "dvu/srnn.hpp"

namespace dvu::tracker {

enum class Dynamics { kDvae, kLinear };

// One multi-object sequence to track: per-frame detection lists. The number
// of detections K_t may vary, including empty frames. The object count
// defaults to the frame-1 detection count.
struct SceneData {
  int T = 0;
  std::vector<std::vector<BBox>> detections;  // [t][k]

  int K1() const { return detections.empty() ? 0 : static_cast<int>(detections[0].size()); }
  void validate() const;
};

struct TrackerConfig {
  double r_phi = 0.04;      // observation noise ratio
  int init_window = 30;     // J, cascade sub-sequence length
  int init_iters = 20;      // I0, iterations per cascade window
  int iters = 70;           // I, main iterations
  bool fine_tune = false;
  double fine_tune_lr = 1e-4;
  bool m_step_phi = false;  // re-estimate observation covariances (full-matrix path)
  Dynamics dynamics = Dynamics::kDvae;
  int n_objects = 0;        // 0 = use K_1
  std::uint64_t seed = 0;
  bool record_history = false;  // keep per-iteration position snapshots

  void validate() const;
};

// Per-detection observation noise. Diagonal by default; the full-matrix
// variant is only engaged by the m-step flag.
struct ObservationNoise {
  std::vector<std::vector<Eigen::Vector4d>> diag;  // [t][k]
  bool full = false;
  std::vector<std::vector<Eigen::Matrix4d>> mat;   // [t][k] when full
};

// Per-object, per-frame posterior and sampled sequences.
struct TrackState {
  // All indexed [t][n].
  std::vector<std::vector<Eigen::Vector4d>> m;
  std::vector<std::vector<Eigen::Vector4d>> V;       // diagonal of V_tn
  std::vector<std::vector<Eigen::Matrix4d>> V_full;  // full path only
  std::vector<std::vector<Eigen::Vector4d>> s_sample;
  std::vector<std::vector<Eigen::Vector4d>> z_sample;

  static TrackState allocate(int T, int N, bool full);
};

struct AssignmentPosterior {
  std::vector<Eigen::MatrixXd> eta;  // eta[t] is K_t x N, rows sum to 1
  long long underflow_events = 0;
};

struct IterationDiagnostics {
  double mean_entropy = 0.0;  // mean over (t,k) of -sum_n eta ln eta
  double mean_move = 0.0;     // mean over (t,n) of |m_i - m_{i-1}|
};

struct TrackResult {
  TrackState state;
  AssignmentPosterior eta;
  std::vector<IterationDiagnostics> iterations;
  std::vector<std::vector<int>> hard_assignment;  // [t][k] -> object (argmax eta)
  int n_objects = 0;
  long long underflow_events = 0;
  std::vector<std::vector<std::vector<Eigen::Vector4d>>> m_history;  // [iter][t][n]
  bool params_tuned = false;
  srnn::SrnnParams tuned_params;  // populated when cfg.fine_tune
};

// Fixed observation covariance: diagonal r^2 * [w^2, h^2, w^2, h^2] from the
// frame-1 size of detection slot k, identical across frames; extra slots
// (K_t > K_1) fall back to their own frame's detection size.
ObservationNoise fixed_phi(const SceneData& scene, double r_phi, bool full = false);

// log beta_tkn of the assignment posterior (diagonal path):
// log N(o; m, Phi) - 0.5 * sum_d V_d / Phi_d.
double log_beta(const Eigen::Vector4d& o, const Eigen::Vector4d& m,
                const Eigen::Vector4d& v_diag, const Eigen::Vector4d& phi_diag);

// Assignment posterior update. Computed in the log domain with per-(t,k) max
// subtraction; if every log beta falls below -700 the row falls back to
// uniform and the event is counted.
AssignmentPosterior e_w_step(const SceneData& scene, const TrackState& state,
                             const ObservationNoise& phi);

// Precision-weighted fusion of detections with the dynamical prior (diagonal
// path): V = (sum_k eta_k Phi_k^-1 + diag(v)^-1)^-1, m = V (sum_k ... + ...).
void fuse_diag(const std::vector<BBox>& dets, const Eigen::VectorXd& eta_col,
               const std::vector<Eigen::Vector4d>& phi_diag, const srnn::GaussianDiag& prior,
               Eigen::Vector4d& m_out, Eigen::Vector4d& v_out);

// One joint E-Z/E-S sweep over the whole sequence with the stated sampling
// order (encoder on previous-iteration s, decoder on current-iteration s).
TrackState e_s_step(const SceneData& scene, const AssignmentPosterior& eta,
                    const ObservationNoise& phi, const srnn::SrnnParams& params,
                    const TrackState& prev, std::uint64_t seed, int iteration);

// Observation covariance re-estimation (full-matrix), floored to positive
// definite by adding eps*I when needed. Only used behind cfg.m_step_phi.
ObservationNoise m_step_phi(const SceneData& scene, const AssignmentPosterior& eta,
                            const TrackState& state);

// Monte Carlo ELBO for the fine-tune step, with the iteration's samples
// frozen: sum over objects of the decoder log-likelihood of the current s
// samples minus the per-frame KL between the inference head (fed the
// previous-iteration s) and the latent prior (fed the current one).
// Gradients, when requested, flow through the network parameters only.
double finetune_objective(const SceneData& scene, const srnn::SrnnParams& params,
                          const TrackState& prev, const TrackState& cur,
                          std::vector<double>* grad_out = nullptr);

// One Adam ascent step on the objective above; returns the updated
// parameters. With cfg.fine_tune unset this is the identity. A non-finite
// objective skips the update.
srnn::SrnnParams e_z_finetune(const SceneData& scene, const TrackState& prev,
                              const TrackState& cur, const srnn::SrnnParams& params,
                              const TrackerConfig& cfg);

// Piece-wise constant cascade initialization: windows of length J, window 1
// constant at the frame-1 detections, each later window constant at the
// previous window's refined endpoint; V starts at the Phi values.
TrackState cascade_init(const SceneData& scene, const srnn::SrnnParams* params,
                        const TrackerConfig& cfg, const ObservationNoise& phi);

// Full tracking run: cascade init, then I iterations of E-W, joint E-Z/E-S,
// optional fine-tune and M step. Deterministic given (scene, params, cfg).
TrackResult track(const SceneData& scene, const srnn::SrnnParams* params,
                  const TrackerConfig& cfg);

}  // namespace dvu::tracker
