#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dvu/bbox.hpp"
#include "dvu/metrics.hpp"
#include "dvu/tracker.hpp"

namespace dvu::dataio {

struct SceneConfig {
  double img_width = 1.0;
  double img_height = 1.0;
  int track_count = 3;
  std::uint64_t seed = 0;
};

// Pixel (left, top, w, h), y-down <-> internal normalized y-up LTRB.
BBox normalize_box(double left, double top, double w, double h, double img_w, double img_h);
void denormalize_box(const BBox& b, double img_w, double img_h, double& left, double& top,
                     double& w, double& h);

struct MotRow {
  int frame = 0;
  int id = -1;
  double left = 0, top = 0, w = 0, h = 0;
  double conf = 1.0;
  bool flagged_out = false;  // gt rows with the consider-flag set to 0
};

// Comma-separated MOTChallenge rows (det.txt / gt.txt). Throws DataError with
// the line number on malformed rows.
std::vector<MotRow> parse_mot_csv(const std::filesystem::path& path);

// Per-frame normalized detection lists, indexed frame-1; rows with
// non-positive size are skipped (counted in *skipped).
std::vector<std::vector<BBox>> parse_detections(const std::filesystem::path& path,
                                                const SceneConfig& cfg, int* skipped = nullptr);

// One benchmark scene: detections to track plus aligned ground truth and,
// for synthetic scenes, the true detection-to-object labels.
struct Scene {
  std::string name;
  double img_w = 1.0, img_h = 1.0;
  tracker::SceneData data;                    // normalized detections
  metrics::TrackSet gt;                       // normalized, frames 1..T
  std::vector<std::vector<int>> det_labels;   // [t][k] -> gt track index, -1 unknown
  std::string scenario;
  std::uint64_t seed = 0;
};

// Directory layout: <dir>/{det.txt, gt.txt, meta.json}.
void save_scene(const std::filesystem::path& dir, const Scene& scene);
Scene load_scene(const std::filesystem::path& dir);

struct BuildStats {
  int windows_total = 0;
  int windows_skipped = 0;  // too few full-length tracks
  int scenes = 0;
};

// MOT17-style construction: per frame, detections are Hungarian-matched to
// ground truth on 1-IoU cost (accepted at IoU >= 0.5, the rest discarded);
// the sequence splits into length-T windows and each window with enough
// tracks spanning it start-to-end yields one scene of `track_count` randomly
// chosen tracks.
BuildStats build_benchmark(const std::filesystem::path& gt_file,
                           const std::filesystem::path& det_file, const SceneConfig& cfg, int T,
                           const std::filesystem::path& out_dir);

struct SuiteConfig {
  std::vector<std::string> scenarios = {"separated", "sinusoidal", "crossing", "dropout",
                                        "crossing_dropout"};
  double noise_sigma = 0.02;  // detection noise as a fraction of box size
  int scenes_per_scenario = 4;
  int T = 60;
  int n_objects = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

// Scripted 3-object scenes with known labels: well-separated parallel motion,
// sinusoidal motion, crossing objects, long detection absences, and the
// combination. Detections carry Gaussian noise scaled by box size; per-frame
// detection order is shuffled so the index never encodes identity.
std::vector<Scene> synth_benchmark(const SuiteConfig& cfg);

void save_suite(const std::filesystem::path& dir, const std::vector<Scene>& scenes);
std::vector<Scene> load_suite(const std::filesystem::path& dir);

// Tracker output as a metrics track set (object index n becomes id n+1).
metrics::TrackSet result_tracks(const tracker::TrackResult& result);

// MOTChallenge result rows (frame, id, bb_left, bb_top, w, h, 1, -1, -1, -1).
void write_mot_results(const std::filesystem::path& path, const tracker::TrackResult& result,
                       double img_w, double img_h);

// Read tracking results (ours or external) into a track set for evaluation.
metrics::TrackSet read_mot_tracks(const std::filesystem::path& path, double img_w, double img_h,
                                  bool honor_flag = false);

}  // namespace dvu::dataio
