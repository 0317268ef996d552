#include "dvu/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "dvu/dataset.hpp"
#include "dvu/error.hpp"

namespace dvu::synth {

namespace {

constexpr double kMinSin = 1e-6;
constexpr int kMaxRetries = 32;
constexpr double kMinBoxSize = 1e-4;
constexpr std::uint64_t kSequenceStream = 0x73796e74686b;  // per-sequence RNG substream tag

}  // namespace

void TrajectoryConfig::validate() const {
  if (T < 2) throw ConfigError("synth: T must be >= 2");
  if (s_max < 1) throw ConfigError("synth: s_max must be >= 1");
  double psum = 0.0;
  for (double p : seg_type_probs) {
    if (p < 0.0) throw ConfigError("synth: segment probabilities must be >= 0");
    psum += p;
  }
  if (std::abs(psum - 1.0) > 1e-9) throw ConfigError("synth: segment probabilities must sum to 1");
  for (const GaussParam* g : {&a1, &a2, &omega, &phi0, &w0_log, &rhw_log}) {
    if (g->sigma < 0.0) throw ConfigError("synth: sigma must be >= 0");
  }
  if (min_segment_len < 1) throw ConfigError("synth: min_segment_len must be >= 1");
}

double eval_segment(SegmentKind kind, const SegmentParams& sp, double free_const, int t_start,
                    int t) {
  const double tau = static_cast<double>(t - t_start);
  switch (kind) {
    case SegmentKind::kStatic:
      return free_const;
    case SegmentKind::kConstVelocity:
      return sp.a1 * tau + free_const;
    case SegmentKind::kConstAcceleration:
      return sp.a2 * tau * tau + sp.a1 * tau + free_const;
    case SegmentKind::kSinusoidal:
      return free_const * std::sin(sp.omega * static_cast<double>(t) + sp.phi0);
  }
  return 0.0;
}

std::vector<double> gen_segment(SegmentKind kind, const SegmentParams& sp, double start_value,
                                int t_start, int t_end, SegmentFit* fit) {
  double free_const = 0.0;
  switch (kind) {
    case SegmentKind::kStatic:
    case SegmentKind::kConstVelocity:
    case SegmentKind::kConstAcceleration:
      // Local time: the polynomial value at tau = 0 is the free constant.
      free_const = start_value;
      break;
    case SegmentKind::kSinusoidal: {
      const double s = std::sin(sp.omega * static_cast<double>(t_start) + sp.phi0);
      if (std::abs(s) < kMinSin) {
        if (std::abs(start_value) < 1e-12) {
          free_const = 0.0;  // flat zero sinusoid; any amplitude would do
        } else {
          throw NumericError("gen_segment: sinusoid continuity unsolvable at t=" +
                             std::to_string(t_start));
        }
      } else {
        free_const = start_value / s;
      }
      break;
    }
  }
  std::vector<double> out;
  out.reserve(t_end - t_start);
  for (int t = t_start; t < t_end; ++t) {
    out.push_back(eval_segment(kind, sp, free_const, t_start, t));
  }
  if (fit) *fit = SegmentFit{kind, sp, free_const, start_value, t_start, t_end};
  return out;
}

std::vector<int> sample_boundaries(const TrajectoryConfig& cfg, int segments, Rng& rng) {
  if (segments <= 1) return {};
  // Interior boundaries t_1 < ... < t_{s-1}; segment i covers [t_{i-1}, t_i)
  // with t_0 = 1 and t_s = T+1, each at least min_segment_len frames long.
  const int lo = 1 + cfg.min_segment_len;
  const int hi = cfg.T + 1 - cfg.min_segment_len;  // inclusive upper bound
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::vector<int> b;
    for (int i = 0; i < segments - 1; ++i)
      b.push_back(lo + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(hi - lo + 1))));
    std::sort(b.begin(), b.end());
    bool ok = true;
    int prev = 1;
    for (int t : b) {
      if (t - prev < cfg.min_segment_len) ok = false;
      prev = t;
    }
    if (cfg.T + 1 - prev < cfg.min_segment_len) ok = false;
    if (ok) return b;
  }
  // Fallback: equal split.
  std::vector<int> b;
  for (int i = 1; i < segments; ++i) b.push_back(1 + i * cfg.T / segments);
  return b;
}

namespace {

SegmentKind sample_kind(const TrajectoryConfig& cfg, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    acc += cfg.seg_type_probs[i];
    if (u < acc) return static_cast<SegmentKind>(i);
  }
  return SegmentKind::kSinusoidal;
}

SegmentParams sample_params(const TrajectoryConfig& cfg, Rng& rng) {
  SegmentParams sp;
  sp.a1 = rng.normal(cfg.a1.mu, cfg.a1.sigma);
  sp.a2 = rng.normal(cfg.a2.mu, cfg.a2.sigma);
  sp.omega = rng.normal(cfg.omega.mu, cfg.omega.sigma);
  sp.phi0 = rng.normal(cfg.phi0.mu, cfg.phi0.sigma);
  return sp;
}

}  // namespace

CoordSequence gen_sequence_with(const TrajectoryConfig& cfg, double start,
                                const std::vector<int>& boundaries, Rng& rng) {
  CoordSequence seq;
  seq.values.reserve(cfg.T);
  double value = start;
  int t0 = 1;
  for (std::size_t i = 0; i <= boundaries.size(); ++i) {
    const int t1 = i < boundaries.size() ? boundaries[i] : cfg.T + 1;
    SegmentKind kind = sample_kind(cfg, rng);
    SegmentParams sp = sample_params(cfg, rng);
    SegmentFit fit;
    std::vector<double> vals;
    bool done = false;
    for (int attempt = 0; attempt < kMaxRetries && !done; ++attempt) {
      try {
        vals = gen_segment(kind, sp, value, t0, t1, &fit);
        // Reject wild sinusoid amplitudes from near-zero sines; resample phase.
        if (kind == SegmentKind::kSinusoidal && std::abs(fit.free_const) > cfg.amplitude_max) {
          sp.phi0 = rng.normal(cfg.phi0.mu, cfg.phi0.sigma);
          continue;
        }
        done = true;
      } catch (const NumericError&) {
        sp.phi0 = rng.normal(cfg.phi0.mu, cfg.phi0.sigma);
      }
    }
    if (!done) {
      kind = SegmentKind::kStatic;
      vals = gen_segment(kind, sp, value, t0, t1, &fit);
    }
    seq.values.insert(seq.values.end(), vals.begin(), vals.end());
    seq.segments.push_back(fit);
    value = eval_segment(kind, sp, fit.free_const, t0, t1);  // next segment's start
    t0 = t1;
  }
  return seq;
}

CoordSequence gen_sequence(const TrajectoryConfig& cfg, Rng& rng) {
  cfg.validate();
  const double start = rng.uniform();
  int s = 1 + static_cast<int>(rng.uniform_index(cfg.s_max));
  s = std::min(s, std::max(1, cfg.T / cfg.min_segment_len));
  const std::vector<int> boundaries = sample_boundaries(cfg, s, rng);
  return gen_sequence_with(cfg, start, boundaries, rng);
}

std::vector<BBox> gen_bbox_track(const TrajectoryConfig& cfg, Rng& rng) {
  cfg.validate();
  const double x0 = rng.uniform();
  const double y0 = rng.uniform();
  const double w0 = rng.lognormal(cfg.w0_log.mu, cfg.w0_log.sigma);
  const double r_hw = rng.lognormal(cfg.rhw_log.mu, cfg.rhw_log.sigma);
  int s = 1 + static_cast<int>(rng.uniform_index(cfg.s_max));
  s = std::min(s, std::max(1, cfg.T / cfg.min_segment_len));
  const std::vector<int> boundaries = sample_boundaries(cfg, s, rng);

  const CoordSequence xs = gen_sequence_with(cfg, x0, boundaries, rng);
  const CoordSequence ys = gen_sequence_with(cfg, y0, boundaries, rng);
  const CoordSequence ws = gen_sequence_with(cfg, w0, boundaries, rng);

  const double w_floor = std::max(kMinBoxSize, kMinBoxSize / r_hw);
  std::vector<BBox> track;
  track.reserve(cfg.T);
  for (int t = 0; t < cfg.T; ++t) {
    const double w = std::max(ws.values[t], w_floor);
    const double h = w * r_hw;
    // Box from top-left corner (x, y), y-up: bottom = y - h.
    track.push_back(BBox{xs.values[t], ys.values[t], xs.values[t] + w, ys.values[t] - h});
  }
  return track;
}

namespace {

double avg_speed(const std::vector<Eigen::Vector4d>& seq) {
  if (seq.size() < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t t = 1; t < seq.size(); ++t) {
    const double dx = 0.5 * (seq[t][0] + seq[t][2]) - 0.5 * (seq[t - 1][0] + seq[t - 1][2]);
    const double dy = 0.5 * (seq[t][1] + seq[t][3]) - 0.5 * (seq[t - 1][1] + seq[t - 1][3]);
    acc += std::sqrt(dx * dx + dy * dy);
  }
  return acc / static_cast<double>(seq.size() - 1);
}

}  // namespace

DatasetStats gen_dataset(const TrajectoryConfig& cfg, int n_train, int n_val,
                         const std::filesystem::path& out_dir) {
  cfg.validate();
  if (n_train < 1 || n_val < 0) throw ConfigError("gen_dataset: need n_train >= 1, n_val >= 0");
  std::filesystem::create_directories(out_dir);

  auto make = [&](int count, int index_offset) {
    std::vector<std::vector<Eigen::Vector4d>> seqs;
    seqs.reserve(count);
    for (int i = 0; i < count; ++i) {
      Rng rng = Rng::stream(cfg.seed, {kSequenceStream, static_cast<std::uint64_t>(index_offset + i)});
      std::vector<Eigen::Vector4d> seq;
      for (const BBox& b : gen_bbox_track(cfg, rng)) seq.push_back(b.vec());
      seqs.push_back(std::move(seq));
    }
    return seqs;
  };

  const auto train = make(n_train, 0);
  const auto val = make(n_val, n_train);
  write_dataset(out_dir / "train.txt", train);
  write_dataset(out_dir / "val.txt", val);

  DatasetStats stats;
  stats.n_train = n_train;
  stats.n_val = n_val;
  std::vector<double> speeds;
  for (const auto& s : train) speeds.push_back(avg_speed(s));
  for (const auto& s : val) speeds.push_back(avg_speed(s));
  const double max_speed = speeds.empty() ? 0.0 : *std::max_element(speeds.begin(), speeds.end());
  stats.mean_speed =
      speeds.empty() ? 0.0 : std::accumulate(speeds.begin(), speeds.end(), 0.0) / speeds.size();
  const int bins = 20;
  const double width = max_speed > 0.0 ? max_speed / bins : 1.0;
  stats.speed_bin_counts.assign(bins, 0);
  for (int i = 0; i <= bins; ++i) stats.speed_bin_edges.push_back(i * width);
  for (double sp : speeds) {
    int b = std::min(bins - 1, static_cast<int>(sp / width));
    stats.speed_bin_counts[b]++;
  }

  nlohmann::json j;
  j["n_train"] = n_train;
  j["n_val"] = n_val;
  j["T"] = cfg.T;
  j["seed"] = cfg.seed;
  j["mean_speed"] = stats.mean_speed;
  j["speed_histogram"] = {{"bin_edges", stats.speed_bin_edges},
                          {"counts", stats.speed_bin_counts}};
  std::ofstream out(out_dir / "stats.json");
  if (!out) throw DataError("gen_dataset: cannot write stats.json");
  out << j.dump(2) << "\n";
  return stats;
}

}  // namespace dvu::synth
