#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "dvu/dataset.hpp"
#include "dvu/srnn.hpp"

namespace dvu::pretrain {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction over a flat parameter vector.
class Adam {
 public:
  Adam(AdamConfig cfg, std::size_t n);
  // Throws NumericError on non-finite gradients; the step is aborted and the
  // internal state left untouched.
  void step(std::span<double> params, std::span<const double> grads);
  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

// Stop once `patience` epochs have passed since the best validation loss.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  // Feed one epoch's validation loss; returns true when training should stop.
  bool update(int epoch, double val_loss);
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = -1;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 256;
  int patience = 50;
  int max_epochs = 2000;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double elapsed_s = 0.0;
};

struct TrainResult {
  srnn::SrnnParams best_params;
  int best_epoch = 0;
  double best_val = 0.0;
  std::vector<EpochLog> log;
  bool diverged = false;
  bool early_stopped = false;
};

// Negative ELBO of one sequence plus its parameter gradient (flattened in
// SrnnParams::named() order). The overload with a scratch tape reuses its
// buffers across calls.
double sequence_loss_and_grad(const srnn::SrnnParams& p, const BoxSequence& seq, Rng rng,
                              std::vector<double>& grad_out);
double sequence_loss_and_grad(const srnn::SrnnParams& p, const BoxSequence& seq, Rng rng,
                              std::vector<double>& grad_out, ad::Tape& tape);

// Mean validation negative ELBO with reparameterization noise frozen per
// sequence index, so successive epochs see the same estimator.
double validation_loss(const srnn::SrnnParams& p, const std::vector<BoxSequence>& val,
                       std::uint64_t seed);

// Adam + teacher forcing + early stopping. Per-epoch shuffling and per-
// sequence noise use substreams of cfg.seed, so the whole run (losses and the
// resulting parameters) is reproducible, independent of thread count.
TrainResult train(const std::vector<BoxSequence>& train_set,
                  const std::vector<BoxSequence>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace dvu::pretrain
