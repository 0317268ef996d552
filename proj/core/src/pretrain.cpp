#include "dvu/pretrain.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "dvu/error.hpp"

namespace dvu::pretrain {

namespace {

constexpr std::uint64_t kShuffleStream = 0x736875666667;
constexpr std::uint64_t kNoiseStream = 0x747261696e;
constexpr std::uint64_t kValNoiseStream = 0x76616c6964;

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

}  // namespace

Adam::Adam(AdamConfig cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {
  if (cfg_.lr <= 0.0) throw ConfigError("adam: lr must be > 0");
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("adam: parameter/gradient size mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient, step aborted");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

bool EarlyStopper::update(int epoch, double val_loss) {
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    return false;
  }
  return best_epoch_ >= 0 && epoch - best_epoch_ >= patience_;
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
}

double sequence_loss_and_grad(const srnn::SrnnParams& p, const BoxSequence& seq, Rng rng,
                              std::vector<double>& grad_out) {
  ad::Tape tape;
  return sequence_loss_and_grad(p, seq, rng, grad_out, tape);
}

double sequence_loss_and_grad(const srnn::SrnnParams& p, const BoxSequence& seq, Rng rng,
                              std::vector<double>& grad_out, ad::Tape& tape) {
  tape.reset();
  srnn::BoundParams bp = srnn::bind(tape, p, /*trainable=*/true);
  ad::Var loss = srnn::sequence_elbo(tape, bp, seq, rng);
  tape.backward(loss);
  grad_out.clear();
  for (const ad::Var& v : bp.all()) {
    const ad::Tensor& g = tape.grad(v);
    grad_out.insert(grad_out.end(), g.data.begin(), g.data.end());
  }
  return loss.value().data[0];
}

double validation_loss(const srnn::SrnnParams& p, const std::vector<BoxSequence>& val,
                       std::uint64_t seed) {
  if (val.empty()) throw ConfigError("validation_loss: empty validation set");
  double acc = 0.0;
  ad::Tape tape;
  for (std::size_t i = 0; i < val.size(); ++i) {
    tape.reset();
    srnn::BoundParams bp = srnn::bind(tape, p, /*trainable=*/false);
    Rng rng = Rng::stream(seed, {kValNoiseStream, i});
    acc += srnn::sequence_elbo(tape, bp, val[i], rng).value().data[0];
  }
  return acc / static_cast<double>(val.size());
}

TrainResult train(const std::vector<BoxSequence>& train_set,
                  const std::vector<BoxSequence>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: empty training set");
  if (val_set.empty()) throw ConfigError("train: empty validation set");

  srnn::SrnnParams params = srnn::SrnnParams::init(cfg.seed);
  std::vector<double> flat = params.flatten();
  const std::size_t P = flat.size();
  Adam adam({cfg.lr, 0.9, 0.999, 1e-8}, P);
  EarlyStopper stopper(cfg.patience);
  const int n_threads = resolve_threads(cfg.threads);

  TrainResult result;
  result.best_params = params;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto t0 = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Fisher-Yates with an epoch-indexed stream.
    Rng shuffle_rng = Rng::stream(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.uniform_index(i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    bool finite = true;
    try {
    for (std::size_t start = 0; start < order.size() && finite;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t bsz = end - start;

      std::vector<std::vector<double>> grads(bsz);
      std::vector<double> losses(bsz, 0.0);
      auto worker = [&](std::size_t w) {
        ad::Tape tape;  // recycled across this worker's sequences
        for (std::size_t b = w; b < bsz; b += static_cast<std::size_t>(n_threads)) {
          const std::size_t seq_idx = order[start + b];
          Rng noise = Rng::stream(cfg.seed, {kNoiseStream, static_cast<std::uint64_t>(epoch), seq_idx});
          try {
            losses[b] = sequence_loss_and_grad(params, train_set[seq_idx], noise, grads[b], tape);
          } catch (const NumericError&) {
            losses[b] = std::numeric_limits<double>::quiet_NaN();
            grads[b].assign(P, 0.0);
          }
        }
      };
      if (n_threads > 1 && bsz > 1) {
        std::vector<std::thread> pool;
        for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker, static_cast<std::size_t>(w));
        for (auto& th : pool) th.join();
      } else {
        worker(0);
      }

      // Fixed-order reduction over the batch, independent of thread schedule.
      std::vector<double> batch_grad(P, 0.0);
      for (std::size_t b = 0; b < bsz; ++b) {
        epoch_loss += losses[b];
        if (!std::isfinite(losses[b])) finite = false;
        for (std::size_t i = 0; i < P; ++i) batch_grad[i] += grads[b][i];
      }
      if (!finite) break;
      const double inv = 1.0 / static_cast<double>(bsz);
      for (double& g : batch_grad) g *= inv;
      adam.step(flat, batch_grad);
      params.unflatten(flat);
    }
    } catch (const NumericError&) {
      finite = false;  // divergence: abort, keep the best checkpoint so far
    }
    epoch_loss /= static_cast<double>(train_set.size());

    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (finite) {
      try {
        val_loss = validation_loss(params, val_set, cfg.seed);
      } catch (const NumericError&) {
        finite = false;
      }
      if (!std::isfinite(val_loss)) finite = false;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss;
    log.val_loss = val_loss;
    log.lr = cfg.lr;
    log.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (!finite) {
      result.diverged = true;  // best checkpoint so far is retained
      break;
    }
    const bool stop = stopper.update(epoch, val_loss);
    if (stopper.best_epoch() == epoch) {
      result.best_params = params;
      result.best_epoch = epoch;
      result.best_val = val_loss;
    }
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace dvu::pretrain
