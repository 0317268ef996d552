#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace dvu {

// Deterministic RNG. std::mt19937_64 output is pinned by the standard, and the
// uniform/normal transforms below are written out explicitly, so identical
// seeds give identical draws on every platform. std::normal_distribution is
// deliberately avoided (its algorithm is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller; draws come in pairs, the second is cached.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  double lognormal(double mu, double sigma);

  Eigen::Vector4d normal4();

  // Derives an independent substream from a master seed and a path of indices
  // (e.g. {epoch, sequence}). Uses splitmix64 mixing so nearby paths decorrelate.
  static Rng stream(std::uint64_t master, std::initializer_list<std::uint64_t> path);

 private:
  std::mt19937_64 gen_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// splitmix64 mix step, also used for input hashing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace dvu
