#include "dvu/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "dvu/error.hpp"
#include "dvu/rng.hpp"

namespace dvu::dataio {

namespace {

constexpr std::uint64_t kSuiteStream = 0x73756974;
constexpr double kMinSize = 1e-4;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

BBox normalize_box(double left, double top, double w, double h, double img_w, double img_h) {
  return BBox{left / img_w, 1.0 - top / img_h, (left + w) / img_w, 1.0 - (top + h) / img_h};
}

void denormalize_box(const BBox& b, double img_w, double img_h, double& left, double& top,
                     double& w, double& h) {
  left = b.l * img_w;
  top = (1.0 - b.t) * img_h;
  w = b.width() * img_w;
  h = b.height() * img_h;
}

std::vector<MotRow> parse_mot_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<MotRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    MotRow r;
    double flag = 1.0;
    const int n = std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf", &r.frame, &r.id, &r.left,
                              &r.top, &r.w, &r.h, &flag);
    if (n < 6) {
      throw DataError("malformed row at " + path.string() + ":" + std::to_string(line_no));
    }
    if (r.frame < 1) {
      throw DataError("frame index < 1 at " + path.string() + ":" + std::to_string(line_no));
    }
    r.conf = n >= 7 ? flag : 1.0;
    r.flagged_out = n >= 7 && flag == 0.0;
    rows.push_back(r);
  }
  return rows;
}

std::vector<std::vector<BBox>> parse_detections(const std::filesystem::path& path,
                                                const SceneConfig& cfg, int* skipped) {
  const std::vector<MotRow> rows = parse_mot_csv(path);
  int max_frame = 0;
  for (const MotRow& r : rows) max_frame = std::max(max_frame, r.frame);
  std::vector<std::vector<BBox>> frames(max_frame);
  int skip_count = 0;
  for (const MotRow& r : rows) {
    if (r.w <= 0.0 || r.h <= 0.0) {
      ++skip_count;
      continue;
    }
    frames[r.frame - 1].push_back(
        normalize_box(r.left, r.top, r.w, r.h, cfg.img_width, cfg.img_height));
  }
  if (skipped) *skipped = skip_count;
  return frames;
}

namespace {

void write_mot_row(std::ofstream& out, int frame, int id, const BBox& b, double img_w,
                   double img_h, const char* tail) {
  double left, top, w, h;
  denormalize_box(b, img_w, img_h, left, top, w, h);
  out << frame << "," << id << "," << fmt(left) << "," << fmt(top) << "," << fmt(w) << ","
      << fmt(h) << tail << "\n";
}

}  // namespace

void save_scene(const std::filesystem::path& dir, const Scene& scene) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream det(dir / "det.txt", std::ios::trunc);
    if (!det) throw DataError("cannot write " + (dir / "det.txt").string());
    for (int t = 0; t < scene.data.T; ++t) {
      for (const BBox& b : scene.data.detections[t]) {
        write_mot_row(det, t + 1, -1, b, scene.img_w, scene.img_h, ",1,-1,-1,-1");
      }
    }
  }
  {
    std::ofstream gt(dir / "gt.txt", std::ios::trunc);
    if (!gt) throw DataError("cannot write " + (dir / "gt.txt").string());
    for (const metrics::Track& tr : scene.gt) {
      for (const auto& [frame, box] : tr.boxes) {
        write_mot_row(gt, frame, tr.id, box, scene.img_w, scene.img_h, ",1,1,1");
      }
    }
  }
  nlohmann::json j;
  j["name"] = scene.name;
  j["img_width"] = scene.img_w;
  j["img_height"] = scene.img_h;
  j["T"] = scene.data.T;
  j["n_tracks"] = scene.gt.size();
  j["scenario"] = scene.scenario;
  j["seed"] = scene.seed;
  j["det_labels"] = scene.det_labels;
  std::ofstream meta(dir / "meta.json", std::ios::trunc);
  if (!meta) throw DataError("cannot write " + (dir / "meta.json").string());
  meta << j.dump(2) << "\n";
}

Scene load_scene(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw DataError("cannot open " + (dir / "meta.json").string());
  nlohmann::json j;
  try {
    meta_in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad meta.json in " + dir.string() + ": " + e.what());
  }
  Scene scene;
  scene.name = j.value("name", dir.filename().string());
  scene.img_w = j.value("img_width", 1.0);
  scene.img_h = j.value("img_height", 1.0);
  scene.data.T = j.value("T", 0);
  scene.scenario = j.value("scenario", std::string());
  scene.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("det_labels")) {
    scene.det_labels = j["det_labels"].get<std::vector<std::vector<int>>>();
  }

  SceneConfig cfg;
  cfg.img_width = scene.img_w;
  cfg.img_height = scene.img_h;
  auto frames = parse_detections(dir / "det.txt", cfg);
  if (static_cast<int>(frames.size()) > scene.data.T) {
    throw DataError("det.txt has frames beyond T in " + dir.string());
  }
  frames.resize(scene.data.T);
  scene.data.detections = std::move(frames);

  scene.gt = read_mot_tracks(dir / "gt.txt", scene.img_w, scene.img_h, /*honor_flag=*/true);
  return scene;
}

metrics::TrackSet read_mot_tracks(const std::filesystem::path& path, double img_w, double img_h,
                                  bool honor_flag) {
  const std::vector<MotRow> rows = parse_mot_csv(path);
  std::map<int, metrics::Track> by_id;
  for (const MotRow& r : rows) {
    if (honor_flag && r.flagged_out) continue;
    if (r.w <= 0.0 || r.h <= 0.0) continue;
    metrics::Track& tr = by_id[r.id];
    tr.id = r.id;
    tr.boxes[r.frame] = normalize_box(r.left, r.top, r.w, r.h, img_w, img_h);
  }
  metrics::TrackSet out;
  out.reserve(by_id.size());
  for (auto& [id, tr] : by_id) out.push_back(std::move(tr));
  return out;
}

metrics::TrackSet result_tracks(const tracker::TrackResult& result) {
  metrics::TrackSet out;
  const int T = static_cast<int>(result.state.m.size());
  for (int n = 0; n < result.n_objects; ++n) {
    metrics::Track tr;
    tr.id = n + 1;
    for (int t = 0; t < T; ++t) {
      BBox b = BBox::from_vec(result.state.m[t][n]);
      // Guard the box invariant for the evaluator.
      if (b.width() < kMinSize) b.r = b.l + kMinSize;
      if (b.height() < kMinSize) b.t = b.b + kMinSize;
      tr.boxes[t + 1] = b;
    }
    out.push_back(std::move(tr));
  }
  return out;
}

void write_mot_results(const std::filesystem::path& path, const tracker::TrackResult& result,
                       double img_w, double img_h) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const metrics::TrackSet tracks = result_tracks(result);
  const int T = static_cast<int>(result.state.m.size());
  for (int t = 1; t <= T; ++t) {
    for (const metrics::Track& tr : tracks) {
      auto it = tr.boxes.find(t);
      if (it == tr.boxes.end()) continue;
      write_mot_row(out, t, tr.id, it->second, img_w, img_h, ",1,-1,-1,-1");
    }
  }
}

// ---------------------------------------------------------------------------
// MOT17-style benchmark construction
// ---------------------------------------------------------------------------

BuildStats build_benchmark(const std::filesystem::path& gt_file,
                           const std::filesystem::path& det_file, const SceneConfig& cfg, int T,
                           const std::filesystem::path& out_dir) {
  if (T < 2) throw ConfigError("build_benchmark: T must be >= 2");
  if (cfg.track_count < 1) throw ConfigError("build_benchmark: track_count must be >= 1");
  const std::vector<MotRow> gt_rows = parse_mot_csv(gt_file);
  const std::vector<MotRow> det_rows = parse_mot_csv(det_file);

  // Per-frame pools (normalized coordinates; IoU is scale-invariant anyway).
  int max_frame = 0;
  for (const MotRow& r : gt_rows) max_frame = std::max(max_frame, r.frame);
  for (const MotRow& r : det_rows) max_frame = std::max(max_frame, r.frame);

  struct GtBox {
    int id;
    BBox box;
  };
  std::vector<std::vector<GtBox>> gt_frames(max_frame);
  std::vector<std::vector<BBox>> det_frames(max_frame);
  for (const MotRow& r : gt_rows) {
    if (r.flagged_out || r.w <= 0 || r.h <= 0) continue;
    gt_frames[r.frame - 1].push_back(
        {r.id, normalize_box(r.left, r.top, r.w, r.h, cfg.img_width, cfg.img_height)});
  }
  for (const MotRow& r : det_rows) {
    if (r.w <= 0 || r.h <= 0) continue;
    det_frames[r.frame - 1].push_back(
        normalize_box(r.left, r.top, r.w, r.h, cfg.img_width, cfg.img_height));
  }

  // Hungarian det<->gt matching per frame; unmatched detections are dropped.
  // matched[t]: gt id -> detection box.
  std::vector<std::map<int, BBox>> matched(max_frame);
  for (int t = 0; t < max_frame; ++t) {
    const auto& gts = gt_frames[t];
    const auto& dets = det_frames[t];
    if (gts.empty() || dets.empty()) continue;
    Eigen::MatrixXd cost(dets.size(), gts.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      for (std::size_t j = 0; j < gts.size(); ++j) {
        const double ov = metrics::iou(dets[i], gts[j].box);
        cost(i, j) = ov >= 0.5 ? 1.0 - ov : std::numeric_limits<double>::infinity();
      }
    }
    const metrics::Assignment asg = metrics::hungarian(cost);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (asg.row_to_col[i] >= 0) matched[t][gts[asg.row_to_col[i]].id] = dets[i];
    }
  }

  // Track presence per frame (a track counts as present if its gt box exists).
  std::map<int, std::set<int>> gt_presence;  // id -> frames (0-based)
  std::map<int, std::map<int, BBox>> gt_boxes;
  for (int t = 0; t < max_frame; ++t) {
    for (const GtBox& g : gt_frames[t]) {
      gt_presence[g.id].insert(t);
      gt_boxes[g.id][t] = g.box;
    }
  }

  BuildStats stats;
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> scene_dirs;
  for (int w0 = 0; w0 + T <= max_frame; w0 += T) {
    ++stats.windows_total;
    std::vector<int> full_tracks;
    for (const auto& [id, frames] : gt_presence) {
      bool full = true;
      for (int t = w0; t < w0 + T; ++t) {
        if (!frames.count(t)) {
          full = false;
          break;
        }
      }
      if (full) full_tracks.push_back(id);
    }
    if (static_cast<int>(full_tracks.size()) < cfg.track_count) {
      ++stats.windows_skipped;
      continue;
    }
    Rng rng = Rng::stream(cfg.seed, {kSuiteStream, static_cast<std::uint64_t>(w0)});
    // Sample track_count distinct tracks.
    std::vector<int> chosen;
    for (int c = 0; c < cfg.track_count; ++c) {
      const std::size_t pick = rng.uniform_index(full_tracks.size());
      chosen.push_back(full_tracks[pick]);
      full_tracks.erase(full_tracks.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    std::sort(chosen.begin(), chosen.end());

    Scene scene;
    scene.img_w = cfg.img_width;
    scene.img_h = cfg.img_height;
    scene.data.T = T;
    scene.data.detections.resize(T);
    scene.det_labels.resize(T);
    scene.seed = cfg.seed;
    scene.scenario = "mot";
    for (int t = w0; t < w0 + T; ++t) {
      for (std::size_t n = 0; n < chosen.size(); ++n) {
        auto it = matched[t].find(chosen[n]);
        if (it == matched[t].end()) continue;  // detection absence
        scene.data.detections[t - w0].push_back(it->second);
        scene.det_labels[t - w0].push_back(static_cast<int>(n));
      }
    }
    if (scene.data.K1() < 1) {
      ++stats.windows_skipped;
      continue;
    }
    for (std::size_t n = 0; n < chosen.size(); ++n) {
      metrics::Track tr;
      tr.id = static_cast<int>(n) + 1;
      for (int t = w0; t < w0 + T; ++t) tr.boxes[t - w0 + 1] = gt_boxes[chosen[n]][t];
      scene.gt.push_back(std::move(tr));
    }
    char name[32];
    std::snprintf(name, sizeof(name), "scene_%04d", stats.scenes);
    scene.name = name;
    save_scene(out_dir / name, scene);
    scene_dirs.push_back(out_dir / name);
    ++stats.scenes;
  }

  nlohmann::json j;
  j["type"] = "mot_benchmark";
  j["T"] = T;
  j["track_count"] = cfg.track_count;
  j["seed"] = cfg.seed;
  j["windows_total"] = stats.windows_total;
  j["windows_skipped"] = stats.windows_skipped;
  j["scenes"] = stats.scenes;
  std::ofstream idx(out_dir / "suite.json", std::ios::trunc);
  idx << j.dump(2) << "\n";
  return stats;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark suite
// ---------------------------------------------------------------------------

void SuiteConfig::validate() const {
  if (T < 2) throw ConfigError("suite: T must be >= 2");
  if (n_objects < 1) throw ConfigError("suite: n_objects must be >= 1");
  if (scenes_per_scenario < 1) throw ConfigError("suite: scenes_per_scenario must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("suite: noise_sigma must be >= 0");
  static const std::set<std::string> known = {"separated", "sinusoidal", "crossing", "dropout",
                                              "crossing_dropout"};
  for (const std::string& s : scenarios) {
    if (!known.count(s)) throw ConfigError("suite: unknown scenario '" + s + "'");
  }
}

namespace {

struct ObjectScript {
  double w = 0.08, r_hw = 2.5;
  // Center trajectory: linear drift plus an optional sinusoidal component.
  double x0 = 0.5, y0 = 0.5, vx = 0.0, vy = 0.0;
  double amp_x = 0.0, amp_y = 0.0, omega = 0.0, phase = 0.0;
  int drop_from = -1, drop_to = -1;  // detection absence, 1-based inclusive

  BBox box_at(int t) const {  // t is 0-based
    const double s = std::sin(omega * t + phase);
    const double cx = x0 + vx * t + amp_x * s;
    const double cy = y0 + vy * t + amp_y * s;
    const double h = w * r_hw;
    return BBox{cx - 0.5 * w, cy + 0.5 * h, cx + 0.5 * w, cy - 0.5 * h};
  }
  bool dropped(int t1based) const { return t1based >= drop_from && t1based <= drop_to; }
};

std::vector<ObjectScript> script_scenario(const std::string& scenario, const SuiteConfig& cfg,
                                          Rng& rng) {
  const int N = cfg.n_objects;
  std::vector<ObjectScript> objs(N);
  // Horizontal lanes keep the objects apart unless the scenario crosses them.
  for (int n = 0; n < N; ++n) {
    ObjectScript& o = objs[n];
    o.w = rng.uniform(0.05, 0.08);
    o.r_hw = rng.uniform(1.5, 2.2);
    o.x0 = 0.2 + 0.6 * (N == 1 ? 0.5 : static_cast<double>(n) / (N - 1)) + rng.uniform(-0.02, 0.02);
    o.y0 = 0.35 + 0.3 * rng.uniform(0.0, 1.0);
  }
  if (scenario == "separated" || scenario == "dropout") {
    // One shared velocity: parallel motion preserves the separation.
    const double vx = rng.uniform(-0.002, 0.002);
    const double vy = rng.uniform(-0.002, 0.002);
    for (ObjectScript& o : objs) {
      o.vx = vx;
      o.vy = vy;
    }
  } else if (scenario == "sinusoidal") {
    for (ObjectScript& o : objs) {
      o.amp_x = rng.uniform(0.04, 0.08);
      o.omega = rng.uniform(0.08, 0.15);
      o.phase = rng.uniform(0.0, 2.0 * M_PI);
      o.vy = rng.uniform(-0.002, 0.002);
    }
  } else if (scenario == "crossing" || scenario == "crossing_dropout") {
    // The last two objects swap x positions at mid-sequence along a shared
    // curved lane, so straight-line extrapolation misses the path.
    if (N >= 2) {
      ObjectScript& a = objs[N - 2];
      ObjectScript& b = objs[N - 1];
      const double ya = 0.5 + rng.uniform(-0.05, 0.05);
      a.y0 = ya;
      b.y0 = ya;
      a.x0 = 0.30;
      b.x0 = 0.70;
      const double span = 0.40;
      a.vx = span / (cfg.T - 1);
      b.vx = -span / (cfg.T - 1);
      const double amp = rng.uniform(0.05, 0.08);
      const double omega = rng.uniform(0.10, 0.16);
      const double phase = rng.uniform(0.0, 2.0 * M_PI);
      a.amp_y = amp;
      b.amp_y = amp;
      a.omega = omega;
      b.omega = omega;
      a.phase = phase;
      b.phase = phase;
      for (int n = 0; n < N - 2; ++n) objs[n].y0 = 0.2;  // keep bystanders clear
    }
  }
  if (scenario == "dropout") {
    // Long detection absence for the last object, early in the sequence.
    objs[N - 1].drop_from = 2;
    objs[N - 1].drop_to = std::min(cfg.T, 20);
  } else if (scenario == "crossing_dropout") {
    // Absence spanning the approach and the crossing itself.
    objs[N - 1].drop_from = std::min(cfg.T, 22);
    objs[N - 1].drop_to = std::min(cfg.T, 40);
  }
  return objs;
}

}  // namespace

std::vector<Scene> synth_benchmark(const SuiteConfig& cfg) {
  cfg.validate();
  std::vector<Scene> scenes;
  int scene_index = 0;
  for (const std::string& scenario : cfg.scenarios) {
    for (int i = 0; i < cfg.scenes_per_scenario; ++i, ++scene_index) {
      Rng rng = Rng::stream(cfg.seed, {kSuiteStream, static_cast<std::uint64_t>(scene_index)});
      const std::vector<ObjectScript> objs = script_scenario(scenario, cfg, rng);

      Scene scene;
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%04d", scene_index);
      scene.name = name;
      scene.scenario = scenario;
      scene.seed = cfg.seed;
      scene.data.T = cfg.T;
      scene.data.detections.resize(cfg.T);
      scene.det_labels.resize(cfg.T);

      for (int n = 0; n < cfg.n_objects; ++n) {
        metrics::Track tr;
        tr.id = n + 1;
        for (int t = 0; t < cfg.T; ++t) tr.boxes[t + 1] = objs[n].box_at(t);
        scene.gt.push_back(std::move(tr));
      }

      for (int t = 0; t < cfg.T; ++t) {
        std::vector<std::pair<BBox, int>> dets;
        for (int n = 0; n < cfg.n_objects; ++n) {
          if (objs[n].dropped(t + 1)) continue;
          BBox b = objs[n].box_at(t);
          if (cfg.noise_sigma > 0.0) {
            const double sx = cfg.noise_sigma * b.width();
            const double sy = cfg.noise_sigma * b.height();
            b.l += sx * rng.normal();
            b.r += sx * rng.normal();
            b.t += sy * rng.normal();
            b.b += sy * rng.normal();
            if (b.width() < kMinSize) b.r = b.l + kMinSize;
            if (b.height() < kMinSize) b.t = b.b + kMinSize;
          }
          dets.emplace_back(b, n);
        }
        // Shuffle so the detection index carries no identity information.
        for (std::size_t a = dets.size(); a > 1; --a) {
          const std::size_t j = rng.uniform_index(a);
          std::swap(dets[a - 1], dets[j]);
        }
        for (const auto& [box, label] : dets) {
          scene.data.detections[t].push_back(box);
          scene.det_labels[t].push_back(label);
        }
      }
      scenes.push_back(std::move(scene));
    }
  }
  return scenes;
}

void save_suite(const std::filesystem::path& dir, const std::vector<Scene>& scenes) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["type"] = "synthetic_suite";
  j["scenes"] = nlohmann::json::array();
  for (const Scene& s : scenes) {
    save_scene(dir / s.name, s);
    j["scenes"].push_back({{"name", s.name}, {"scenario", s.scenario}});
  }
  std::ofstream idx(dir / "suite.json", std::ios::trunc);
  if (!idx) throw DataError("cannot write " + (dir / "suite.json").string());
  idx << j.dump(2) << "\n";
}

std::vector<Scene> load_suite(const std::filesystem::path& dir) {
  std::ifstream idx(dir / "suite.json");
  if (!idx) throw DataError("cannot open " + (dir / "suite.json").string());
  nlohmann::json j;
  try {
    idx >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad suite.json: " + std::string(e.what()));
  }
  std::vector<Scene> scenes;
  for (const auto& entry : j["scenes"]) {
    Scene s = load_scene(dir / entry["name"].get<std::string>());
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace dvu::dataio
