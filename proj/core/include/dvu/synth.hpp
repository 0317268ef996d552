#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dvu/bbox.hpp"
#include "dvu/rng.hpp"

namespace dvu::synth {

// Elementary per-coordinate dynamics of a trajectory segment.
enum class SegmentKind { kStatic = 0, kConstVelocity = 1, kConstAcceleration = 2, kSinusoidal = 3 };

struct GaussParam {
  double mu = 0.0;
  double sigma = 0.0;
};

// Defaults are stand-ins with pedestrian-like magnitudes in normalized
// coordinates; the reference statistics they would ideally be fitted to are
// not published, so everything is configurable.
struct TrajectoryConfig {
  int T = 60;
  int s_max = 3;
  std::array<double, 4> seg_type_probs = {0.25, 0.25, 0.25, 0.25};
  GaussParam a1{0.0, 0.005};        // velocity, units/frame
  GaussParam a2{0.0, 5e-5};         // acceleration, units/frame^2
  GaussParam omega{0.1, 0.05};      // rad/frame
  GaussParam phi0{0.0, M_PI};       // phase
  GaussParam w0_log{std::log(0.08), 0.5};  // log-normal initial width
  GaussParam rhw_log{std::log(2.5), 0.3};  // log-normal height/width ratio
  int min_segment_len = 5;
  double amplitude_max = 0.5;  // reject sinusoid fits with larger amplitude
  std::uint64_t seed = 0;

  void validate() const;
};

struct SegmentParams {
  double a1 = 0.0;
  double a2 = 0.0;
  double omega = 0.0;
  double phi0 = 0.0;
};

// The free constant solved for continuity: a0 for polynomial kinds, the
// amplitude for the sinusoid. Polynomials run in local segment time
// (tau = t - t_start), so a1 is the velocity at the segment start; the
// sinusoid uses global time (the phase absorbs the shift).
double eval_segment(SegmentKind kind, const SegmentParams& sp, double free_const, int t_start,
                    int t);

struct SegmentFit {
  SegmentKind kind;
  SegmentParams params;
  double free_const = 0.0;
  double start_value = 0.0;
  int t_start = 0;  // inclusive, global frame index (1-based)
  int t_end = 0;    // exclusive
};

// Values for global frames [t_start, t_end) with the free constant solved so
// the segment starts at start_value. Throws NumericError for the unsolvable
// sinusoid case (|sin| < 1e-6 at the start with nonzero start value).
std::vector<double> gen_segment(SegmentKind kind, const SegmentParams& sp, double start_value,
                                int t_start, int t_end, SegmentFit* fit = nullptr);

struct CoordSequence {
  std::vector<double> values;  // length T
  std::vector<SegmentFit> segments;
};

// One coordinate sequence over shared segment boundaries. `boundaries` are the
// interior split frames (may be empty); segment kinds/params are sampled here.
CoordSequence gen_sequence_with(const TrajectoryConfig& cfg, double start,
                                const std::vector<int>& boundaries, Rng& rng);

// Samples the start point, segment count and boundaries, then chains segments.
CoordSequence gen_sequence(const TrajectoryConfig& cfg, Rng& rng);

// Samples interior split frames for `segments` pieces, each at least
// cfg.min_segment_len frames long.
std::vector<int> sample_boundaries(const TrajectoryConfig& cfg, int segments, Rng& rng);

// Full bounding-box track: x, y, w share segment boundaries, the
// height/width ratio is sampled once and constant over the track.
std::vector<BBox> gen_bbox_track(const TrajectoryConfig& cfg, Rng& rng);

struct DatasetStats {
  int n_train = 0;
  int n_val = 0;
  double mean_speed = 0.0;
  std::vector<double> speed_bin_edges;
  std::vector<int> speed_bin_counts;  // over train+val, per-sequence average speed
};

// Writes train.txt / val.txt / stats.json under out_dir. Sequence i draws
// from an RNG stream derived from (cfg.seed, i), so generation order and
// parallelism cannot change the output.
DatasetStats gen_dataset(const TrajectoryConfig& cfg, int n_train, int n_val,
                         const std::filesystem::path& out_dir);

}  // namespace dvu::synth
