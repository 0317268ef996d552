#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dvu/autodiff.hpp"
#include "dvu/rng.hpp"

namespace dvu::srnn {

inline constexpr int kBoxDim = 4;     // observed box vector s_t
inline constexpr int kLatentDim = 4;  // latent z_t (same dim as s by design)
inline constexpr int kHiddenDim = 8;  // LSTM hidden state h_t
inline constexpr double kLogVarMin = -12.0;
inline constexpr double kLogVarMax = 4.0;

// Diagonal Gaussian over a 4-vector, parameterized by mean and log-variance.
// Every network head clamps logvar to [kLogVarMin, kLogVarMax].
struct GaussianDiag {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Vector4d logvar = Eigen::Vector4d::Zero();

  Eigen::Vector4d var() const { return logvar.array().exp(); }
  Eigen::Vector4d stddev() const { return (0.5 * logvar.array()).exp(); }
};

// All weights of the model. Layer naming matches the checkpoint format:
//   lstm.w_ih (32x4)  lstm.w_hh (32x8)  lstm.b (32)      shared recurrence
//   dz.{0,1,2}.{w,b}   latent transition head (12 -> 8 -> 8 -> 8)
//   ds.{0,1}.{w,b}     observation decoder head (12 -> 16 -> 8)
//   ez.{0,1,2}.{w,b}   inference head (16 -> 16 -> 8 -> 8)
// Each head's final linear layer emits [mean(4), logvar(4)].
// LSTM gate order is (input, forget, cell, output); biases start at zero.
struct SrnnParams {
  ad::Tensor lstm_w_ih, lstm_w_hh, lstm_b;
  ad::Tensor dz0_w, dz0_b, dz1_w, dz1_b, dz2_w, dz2_b;
  ad::Tensor ds0_w, ds0_b, ds1_w, ds1_b;
  ad::Tensor ez0_w, ez0_b, ez1_w, ez1_b, ez2_w, ez2_b;

  // Allocates all tensors with the fixed dimensions, zero-filled.
  static SrnnParams zeros();
  // Uniform fan-in initialization of weights, zero biases.
  static SrnnParams init(std::uint64_t seed);

  // Fixed-order (name, tensor) view used by checkpoints, the optimizer and
  // gradient checks.
  std::vector<std::pair<std::string, ad::Tensor*>> named();
  std::vector<std::pair<std::string, const ad::Tensor*>> named() const;

  std::size_t param_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
};

// ---------------------------------------------------------------------------
// Tape path (training / gradient checks / fine-tuning)
// ---------------------------------------------------------------------------

struct BoundParams {
  ad::Var lstm_w_ih, lstm_w_hh, lstm_b;
  ad::Var dz0_w, dz0_b, dz1_w, dz1_b, dz2_w, dz2_b;
  ad::Var ds0_w, ds0_b, ds1_w, ds1_b;
  ad::Var ez0_w, ez0_b, ez1_w, ez1_b, ez2_w, ez2_b;

  std::vector<ad::Var> all() const;
};

// Places every parameter tensor on the tape, as gradient-carrying leaves when
// trainable, otherwise as constants.
BoundParams bind(ad::Tape& tape, const SrnnParams& p, bool trainable = true);

// Copies tape gradients back into an SrnnParams-shaped container (same order
// as named()).
SrnnParams collect_grads(const ad::Tape& tape, const BoundParams& bp);

struct GaussVar {
  ad::Var mean;    // 4-vector
  ad::Var logvar;  // 4-vector, already clamped
};

struct LstmVarState {
  ad::Var h;
  ad::Var c;
};

LstmVarState lstm_initial_state(ad::Tape& tape);
LstmVarState lstm_step(ad::Tape& tape, const BoundParams& bp, ad::Var s_prev,
                       const LstmVarState& st);
GaussVar prior_z(ad::Tape& tape, const BoundParams& bp, ad::Var h, ad::Var z_prev);
GaussVar decode_s(ad::Tape& tape, const BoundParams& bp, ad::Var h, ad::Var z);
GaussVar encode_z(ad::Tape& tape, const BoundParams& bp, ad::Var h, ad::Var s_t,
                  ad::Var z_prev);
// mean + exp(logvar/2) .* eps, differentiable w.r.t. mean/logvar.
ad::Var reparam_sample(ad::Tape& tape, const GaussVar& g, const Eigen::Vector4d& eps);
ad::Var gaussian_logpdf(ad::Tape& tape, ad::Var x, const GaussVar& g);
ad::Var kl_diag(ad::Tape& tape, const GaussVar& q, const GaussVar& p);

// Teacher-forced negative ELBO of one sequence (single-sample Monte Carlo):
// for t = 1..T the shared LSTM consumes the ground-truth s_{t-1}, z_t is
// sampled from the inference head, and the loss accumulates
// -log p(s_t | .) + KL(q(z_t|.) || p(z_t|.)). Noise is drawn from `rng`, four
// normals per frame, so a reseeded rng freezes the estimate.
ad::Var sequence_elbo(ad::Tape& tape, const BoundParams& bp,
                      const std::vector<Eigen::Vector4d>& s_seq, Rng& rng);

// ---------------------------------------------------------------------------
// Plain forward path (tracking / generation); bit-identical to the tape path
// for the same inputs.
// ---------------------------------------------------------------------------

struct LstmState {
  std::array<double, kHiddenDim> h{};
  std::array<double, kHiddenDim> c{};
};

void lstm_step(const SrnnParams& p, const Eigen::Vector4d& s_prev, LstmState& st);
GaussianDiag prior_z(const SrnnParams& p, const LstmState& st, const Eigen::Vector4d& z_prev);
GaussianDiag decode_s(const SrnnParams& p, const LstmState& st, const Eigen::Vector4d& z);
GaussianDiag encode_z(const SrnnParams& p, const LstmState& st, const Eigen::Vector4d& s_t,
                      const Eigen::Vector4d& z_prev);
Eigen::Vector4d reparam_sample(const GaussianDiag& g, Rng& rng);
double gaussian_logpdf(const Eigen::Vector4d& x, const GaussianDiag& g);
double kl_diag(const GaussianDiag& q, const GaussianDiag& p);

// Autoregressive rollout of T frames conditioned on a seed box: z_t sampled
// from the latent prior, the decoder mean fed back as s_t.
std::vector<Eigen::Vector4d> generate(const SrnnParams& p, const Eigen::Vector4d& s_seed,
                                      int T, Rng& rng);

// One-step-ahead prediction error (RMSE over frames 2..T) with the LSTM fed
// ground truth and z following the prior mean chain. Used as a training
// sanity metric against the constant-position predictor.
double one_step_rmse(const SrnnParams& p, const std::vector<Eigen::Vector4d>& s_seq);
double constant_position_rmse(const std::vector<Eigen::Vector4d>& s_seq);

}  // namespace dvu::srnn
