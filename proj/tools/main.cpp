// Command-line front end: dataset generation, pre-training, tracking,
// evaluation and the reproducible benchmark pipeline.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dvu/bench.hpp"
#include "dvu/checkpoint.hpp"
#include "dvu/dataio.hpp"
#include "dvu/dataset.hpp"
#include "dvu/error.hpp"
#include "dvu/manifest.hpp"
#include "dvu/metrics.hpp"
#include "dvu/pretrain.hpp"
#include "dvu/report.hpp"
#include "dvu/synth.hpp"
#include "dvu/tracker.hpp"
#include "dvu/version.hpp"
#include "dvu/vkf.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool g_json_errors = false;

void report_error(const char* kind, const std::string& msg) {
  if (g_json_errors) {
    json j;
    j["error"] = kind;
    j["message"] = msg;
    std::cerr << j.dump() << "\n";
  } else {
    std::cerr << "error (" << kind << "): " << msg << "\n";
  }
}

// Flat key=value config files: each key is a long option of the subcommand
// without the leading dashes, '#' starts a comment. The file's values are
// spliced in right after the subcommand token, so explicit CLI flags win
// (every option uses a take-last policy).
std::vector<std::string> splice_config_args(const std::vector<std::string>& args) {
  std::size_t sub_pos = 0;
  while (sub_pos < args.size() && !args[sub_pos].empty() && args[sub_pos][0] == '-') ++sub_pos;
  if (sub_pos >= args.size()) return args;

  std::string config_path;
  std::vector<std::string> out(args.begin(), args.begin() + sub_pos + 1);
  std::vector<std::string> rest;
  for (std::size_t i = sub_pos + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw dvu::DataError("cannot open config file: " + config_path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      auto trim = [](std::string& s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
      };
      trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw dvu::DataError("config file " + config_path + ":" + std::to_string(line_no) +
                             ": expected key=value");
      }
      std::string key = line.substr(0, eq);
      std::string val = line.substr(eq + 1);
      trim(key);
      trim(val);
      // CLI flags override their config twins.
      bool on_cli = false;
      for (const std::string& r : rest) {
        if (r == "--" + key || r.rfind("--" + key + "=", 0) == 0) {
          on_cli = true;
          break;
        }
      }
      if (!on_cli) out.push_back("--" + key + "=" + val);
    }
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

// Flat key=value echo of a parsed subcommand, config-file compatible.
std::map<std::string, std::string> config_echo(const CLI::App& cmd) {
  std::map<std::string, std::string> out;
  std::istringstream ss(const_cast<CLI::App&>(cmd).config_to_str(true, false));
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.empty() || line[0] == '#' || line[0] == '[') continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '"')) s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '"' || s.back() == '\r')) s.pop_back();
    };
    trim(key);
    trim(val);
    out[key] = val;
  }
  return out;
}

class ManifestScope {
 public:
  ManifestScope(const CLI::App* cmd, int argc, char** argv, std::uint64_t seed)
      : start_(std::chrono::steady_clock::now()) {
    m_.tool_version = dvu::kVersion;
    m_.checkpoint_format_version = dvu::kCheckpointFormatVersion;
    m_.command = cmd->get_name();
    for (int i = 0; i < argc; ++i) m_.argv.emplace_back(argv[i]);
    m_.config = config_echo(*cmd);
    m_.seed = seed;
  }
  void add_input(const fs::path& p) {
    if (fs::exists(p) && fs::is_regular_file(p)) m_.input_hashes[p.string()] = dvu::hash_file_hex(p);
  }
  void add_output(const std::string& rel) { m_.outputs.push_back(rel); }
  void write(const fs::path& path) {
    m_.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    dvu::write_manifest(path, m_);
  }

 private:
  dvu::RunManifest m_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------

struct SynthDataOpts {
  std::string out;
  int train = 1000;
  int val = 250;
  int length = 60;
  int s_max = 3;
  std::uint64_t seed = 0;
};

int run_synth_data(const SynthDataOpts& o, const CLI::App* cmd, int argc, char** argv) {
  dvu::synth::TrajectoryConfig cfg;
  cfg.T = o.length;
  cfg.s_max = o.s_max;
  cfg.seed = o.seed;
  ManifestScope manifest(cmd, argc, argv, o.seed);
  const auto stats = dvu::synth::gen_dataset(cfg, o.train, o.val, o.out);
  std::cout << "wrote " << stats.n_train << " train / " << stats.n_val
            << " val sequences (T=" << o.length << ") to " << o.out << "\n";
  manifest.add_output("train.txt");
  manifest.add_output("val.txt");
  manifest.add_output("stats.json");
  manifest.write(fs::path(o.out) / "manifest.json");
  return 0;
}

struct PretrainOpts {
  std::string data;
  std::string out;
  double lr = 1e-3;
  int batch = 256;
  int patience = 50;
  int max_epochs = 2000;
  std::uint64_t seed = 0;
  int threads = 0;
  int log_every = 10;
};

int run_pretrain(const PretrainOpts& o, const CLI::App* cmd, int argc, char** argv) {
  const auto train_set = dvu::read_dataset(fs::path(o.data) / "train.txt");
  const auto val_set = dvu::read_dataset(fs::path(o.data) / "val.txt");
  dvu::pretrain::TrainConfig cfg;
  cfg.lr = o.lr;
  cfg.batch_size = o.batch;
  cfg.patience = o.patience;
  cfg.max_epochs = o.max_epochs;
  cfg.seed = o.seed;
  cfg.threads = o.threads;

  ManifestScope manifest(cmd, argc, argv, o.seed);
  manifest.add_input(fs::path(o.data) / "train.txt");
  manifest.add_input(fs::path(o.data) / "val.txt");

  const auto t0 = std::chrono::steady_clock::now();
  const auto result = dvu::pretrain::train(train_set, val_set, cfg, [&](const auto& log) {
    if (log.epoch == 1 || log.epoch % o.log_every == 0) {
      std::fprintf(stderr, "epoch %4d  train %.4f  val %.4f  (%.1fs)\n", log.epoch,
                   log.train_loss, log.val_loss, log.elapsed_s);
    }
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path ckpt(o.out);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  dvu::CheckpointMeta meta;
  meta.epoch = result.best_epoch;
  meta.seed = o.seed;
  dvu::save_checkpoint(ckpt, result.best_params, meta);

  std::ofstream log_csv(o.out + ".log.csv", std::ios::trunc);
  log_csv << "epoch,train_loss,val_loss,lr,elapsed_s\n";
  for (const auto& l : result.log) {
    log_csv << l.epoch << "," << l.train_loss << "," << l.val_loss << "," << l.lr << ","
            << l.elapsed_s << "\n";
  }
  manifest.add_output(ckpt.filename().string());
  manifest.add_output(ckpt.filename().string() + ".log.csv");
  manifest.write(o.out + ".manifest.json");

  std::cout << "best epoch " << result.best_epoch << " (val " << result.best_val << "), "
            << result.log.size() << " epochs in " << secs << "s"
            << (result.early_stopped ? ", early-stopped" : "") << "\n";
  if (result.diverged) {
    throw dvu::NumericError("training diverged; best checkpoint retained at " + o.out);
  }
  return 0;
}

struct TrackOpts {
  std::string ckpt;
  std::string detections;
  std::string out;
  int iters = 70;
  double r_phi = 0.04;
  int init_window = 30;
  int init_iters = 20;
  bool fine_tune = false;
  double fine_tune_lr = 1e-4;
  bool m_step_phi = false;
  std::string dynamics = "dvae";
  std::uint64_t seed = 0;
  double img_width = 1.0;
  double img_height = 1.0;
  int n_objects = 0;
};

int run_track(const TrackOpts& o, const CLI::App* cmd, int argc, char** argv) {
  dvu::dataio::Scene scene;
  const fs::path det_path(o.detections);
  if (fs::is_directory(det_path)) {
    scene = dvu::dataio::load_scene(det_path);
  } else {
    scene.img_w = o.img_width;
    scene.img_h = o.img_height;
    dvu::dataio::SceneConfig scfg;
    scfg.img_width = o.img_width;
    scfg.img_height = o.img_height;
    auto frames = dvu::dataio::parse_detections(det_path, scfg);
    scene.data.T = static_cast<int>(frames.size());
    scene.data.detections = std::move(frames);
  }

  dvu::tracker::TrackerConfig cfg;
  cfg.iters = o.iters;
  cfg.r_phi = o.r_phi;
  cfg.init_window = o.init_window;
  cfg.init_iters = o.init_iters;
  cfg.fine_tune = o.fine_tune;
  cfg.fine_tune_lr = o.fine_tune_lr;
  cfg.m_step_phi = o.m_step_phi;
  cfg.seed = o.seed;
  cfg.n_objects = o.n_objects;
  if (o.dynamics == "dvae") {
    cfg.dynamics = dvu::tracker::Dynamics::kDvae;
  } else if (o.dynamics == "linear") {
    cfg.dynamics = dvu::tracker::Dynamics::kLinear;
  } else {
    throw dvu::ConfigError("unknown dynamics '" + o.dynamics + "' (use dvae or linear)");
  }

  ManifestScope manifest(cmd, argc, argv, o.seed);
  if (!fs::is_directory(det_path)) manifest.add_input(det_path);
  dvu::srnn::SrnnParams params;
  const dvu::srnn::SrnnParams* params_ptr = nullptr;
  if (cfg.dynamics == dvu::tracker::Dynamics::kDvae) {
    if (o.ckpt.empty()) throw dvu::ConfigError("--ckpt is required with --dynamics dvae");
    params = dvu::load_checkpoint(o.ckpt);
    params_ptr = &params;
    manifest.add_input(o.ckpt);
  }

  const auto result = dvu::tracker::track(scene.data, params_ptr, cfg);

  fs::create_directories(o.out);
  dvu::dataio::write_mot_results(fs::path(o.out) / "results.txt", result, scene.img_w,
                                 scene.img_h);
  json diag;
  diag["config"] = config_echo(*cmd);
  diag["n_objects"] = result.n_objects;
  diag["underflow_events"] = result.underflow_events;
  diag["iterations"] = json::array();
  for (const auto& it : result.iterations) {
    diag["iterations"].push_back({{"mean_entropy", it.mean_entropy}, {"mean_move", it.mean_move}});
  }
  {
    std::ofstream out(fs::path(o.out) / "diagnostics.json", std::ios::trunc);
    out << diag.dump(2) << "\n";
  }
  dvu::report::write_text(fs::path(o.out) / "trajectories.svg",
                          dvu::report::trajectory_svg(scene, &result, "tracking result"));
  manifest.add_output("results.txt");
  manifest.add_output("diagnostics.json");
  manifest.add_output("trajectories.svg");
  manifest.write(fs::path(o.out) / "manifest.json");
  std::cout << "tracked " << result.n_objects << " objects over " << scene.data.T
            << " frames -> " << o.out << "\n";
  return 0;
}

struct EvaluateOpts {
  std::string gt;
  std::string results;
  std::string out;
  double iou_thr = 0.5;
};

int run_evaluate(const EvaluateOpts& o, const CLI::App* cmd, int argc, char** argv) {
  // IoU is invariant to the coordinate frame, so pixel rows evaluate as-is
  // (unit dims only flip the y axis).
  const auto gt = dvu::dataio::read_mot_tracks(o.gt, 1.0, 1.0, /*honor_flag=*/true);
  const auto hyp = dvu::dataio::read_mot_tracks(o.results, 1.0, 1.0, /*honor_flag=*/false);
  const auto rep = dvu::metrics::evaluate(gt, hyp, o.iou_thr);

  ManifestScope manifest(cmd, argc, argv, 0);
  manifest.add_input(o.gt);
  manifest.add_input(o.results);
  json j;
  j["mota"] = rep.mota;
  j["motp"] = rep.motp;
  j["idf1"] = rep.idf1;
  j["ids"] = rep.ids;
  j["ids_pct"] = rep.ids_pct;
  j["fp"] = rep.fp;
  j["fp_pct"] = rep.fp_pct;
  j["fn"] = rep.fn;
  j["fn_pct"] = rep.fn_pct;
  j["mt"] = rep.mt;
  j["ml"] = rep.ml;
  j["gt_total"] = rep.gt_total;
  j["matches"] = rep.matches;
  j["n_gt_tracks"] = rep.n_gt_tracks;
  j["n_hyp_tracks"] = rep.n_hyp_tracks;
  j["iou_threshold"] = o.iou_thr;
  const fs::path out_path(o.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw dvu::DataError("cannot write " + o.out);
    out << j.dump(2) << "\n";
  }
  manifest.add_output(out_path.filename().string());
  manifest.write(o.out + ".manifest.json");
  std::printf("MOTA %.4f  MOTP %.4f  IDF1 %.4f  IDS %lld  FP %lld  FN %lld\n", rep.mota, rep.motp,
              rep.idf1, rep.ids, rep.fp, rep.fn);
  return 0;
}

struct BuildBenchmarkOpts {
  std::string gt;
  std::string det;
  std::string out;
  int length = 60;
  int tracks = 3;
  double img_width = 1920;
  double img_height = 1080;
  std::uint64_t seed = 0;
};

int run_build_benchmark(const BuildBenchmarkOpts& o, const CLI::App* cmd, int argc, char** argv) {
  dvu::dataio::SceneConfig cfg;
  cfg.img_width = o.img_width;
  cfg.img_height = o.img_height;
  cfg.track_count = o.tracks;
  cfg.seed = o.seed;
  ManifestScope manifest(cmd, argc, argv, o.seed);
  manifest.add_input(o.gt);
  manifest.add_input(o.det);
  const auto stats = dvu::dataio::build_benchmark(o.gt, o.det, cfg, o.length, o.out);
  manifest.add_output("suite.json");
  manifest.write(fs::path(o.out) / "manifest.json");
  std::cout << stats.scenes << " scenes from " << stats.windows_total << " windows ("
            << stats.windows_skipped << " skipped) -> " << o.out << "\n";
  return 0;
}

struct SynthBenchmarkOpts {
  std::string out;
  std::vector<std::string> scenarios = {"separated", "sinusoidal", "crossing", "dropout",
                                        "crossing_dropout"};
  double noise = 0.02;
  int scenes_per = 4;
  int length = 60;
  std::uint64_t seed = 0;
};

int run_synth_benchmark(const SynthBenchmarkOpts& o, const CLI::App* cmd, int argc, char** argv) {
  dvu::dataio::SuiteConfig cfg;
  cfg.scenarios = o.scenarios;
  cfg.noise_sigma = o.noise;
  cfg.scenes_per_scenario = o.scenes_per;
  cfg.T = o.length;
  cfg.seed = o.seed;
  ManifestScope manifest(cmd, argc, argv, o.seed);
  const auto scenes = dvu::dataio::synth_benchmark(cfg);
  dvu::dataio::save_suite(o.out, scenes);
  manifest.add_output("suite.json");
  manifest.write(fs::path(o.out) / "manifest.json");
  std::cout << scenes.size() << " scenes -> " << o.out << "\n";
  return 0;
}

struct BenchmarkOpts {
  std::string suite = "synthetic";
  std::string scenes_dir;  // reuse an existing suite instead of generating
  std::string ckpt;
  bool pretrain_first = false;
  std::string out;
  std::vector<std::string> scenarios = {"separated", "sinusoidal", "crossing", "dropout",
                                        "crossing_dropout"};
  double noise = 0.02;
  int scenes_per = 4;
  int length = 60;
  int iters = 70;
  double r_phi = 0.04;
  int init_window = 30;
  int init_iters = 20;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::vector<double> r_phi_sweep;
};

int run_benchmark(const BenchmarkOpts& o, const CLI::App* cmd, int argc, char** argv) {
  ManifestScope manifest(cmd, argc, argv, o.seed);
  fs::create_directories(o.out);

  dvu::srnn::SrnnParams params;
  if (o.pretrain_first) {
    std::cerr << "pretraining a fresh model (this takes a few minutes)...\n";
    const fs::path data_dir = fs::path(o.out) / "pretrain_data";
    dvu::synth::TrajectoryConfig scfg;
    scfg.T = o.length;
    scfg.seed = o.seed;
    dvu::synth::gen_dataset(scfg, 2000, 500, data_dir);
    dvu::pretrain::TrainConfig tcfg;
    tcfg.seed = o.seed;
    tcfg.batch_size = 256;
    tcfg.patience = 50;
    tcfg.max_epochs = 2000;
    const auto result = dvu::pretrain::train(dvu::read_dataset(data_dir / "train.txt"),
                                             dvu::read_dataset(data_dir / "val.txt"), tcfg);
    params = result.best_params;
    dvu::CheckpointMeta meta;
    meta.epoch = result.best_epoch;
    meta.seed = o.seed;
    dvu::save_checkpoint(fs::path(o.out) / "pretrained.ckpt", params, meta);
    manifest.add_output("pretrained.ckpt");
  } else {
    if (o.ckpt.empty()) {
      throw dvu::DataError("benchmark needs --ckpt CKPT (or --pretrain-first to train one now)");
    }
    params = dvu::load_checkpoint(o.ckpt);
    manifest.add_input(o.ckpt);
  }

  std::vector<dvu::dataio::Scene> scenes;
  if (!o.scenes_dir.empty()) {
    scenes = dvu::dataio::load_suite(o.scenes_dir);
  } else {
    if (o.suite != "synthetic") throw dvu::ConfigError("unknown suite '" + o.suite + "'");
    dvu::dataio::SuiteConfig scfg;
    scfg.scenarios = o.scenarios;
    scfg.noise_sigma = o.noise;
    scfg.scenes_per_scenario = o.scenes_per;
    scfg.T = o.length;
    scfg.seed = o.seed;
    scenes = dvu::dataio::synth_benchmark(scfg);
    dvu::dataio::save_suite(fs::path(o.out) / "scenes", scenes);
  }
  if (scenes.empty()) throw dvu::DataError("benchmark suite contains zero scenes");

  dvu::bench::BenchmarkConfig bcfg;
  bcfg.tracker.iters = o.iters;
  bcfg.tracker.r_phi = o.r_phi;
  bcfg.tracker.init_window = o.init_window;
  bcfg.tracker.init_iters = o.init_iters;
  bcfg.tracker.seed = o.seed;
  bcfg.jobs = o.jobs;

  if (!o.r_phi_sweep.empty()) {
    // Ablation over the observation-noise ratio.
    json ablation;
    ablation["r_phi"] = json::array();
    std::vector<dvu::report::Series> series{{"dvae", "", {}}, {"linear", "", {}}};
    for (double r : o.r_phi_sweep) {
      dvu::bench::BenchmarkConfig c = bcfg;
      c.tracker.r_phi = r;
      c.record_curves = false;
      const auto res = dvu::bench::run_suite(scenes, params, c);
      ablation["r_phi"].push_back({{"value", r},
                                   {"dvae_mota", res.overall_dvae.mota},
                                   {"linear_mota", res.overall_linear.mota}});
      series[0].points.emplace_back(r, res.overall_dvae.mota);
      series[1].points.emplace_back(r, res.overall_linear.mota);
      std::printf("r_phi %.3f: dvae MOTA %.4f, linear MOTA %.4f\n", r, res.overall_dvae.mota,
                  res.overall_linear.mota);
    }
    std::ofstream out(fs::path(o.out) / "ablation.json", std::ios::trunc);
    out << ablation.dump(2) << "\n";
    dvu::report::write_text(fs::path(o.out) / "mota_vs_r_phi.svg",
                            dvu::report::line_chart_svg("MOTA vs r_phi", "r_phi", "MOTA", series));
    manifest.add_output("ablation.json");
    manifest.add_output("mota_vs_r_phi.svg");
    manifest.write(fs::path(o.out) / "manifest.json");
    return 0;
  }

  const auto result = dvu::bench::run_suite(scenes, params, bcfg);
  dvu::bench::write_report(o.out, result, scenes, config_echo(*cmd));
  manifest.add_output("report.json");
  manifest.add_output("report.csv");
  manifest.write(fs::path(o.out) / "manifest.json");

  std::printf("%-18s %8s %8s %8s %6s %6s %6s %6s %8s %8s\n", "scenario", "method", "MOTA", "MOTP",
              "IDF1", "IDS", "MT", "ML", "FP", "FN");
  for (const auto& s : result.scenarios) {
    std::printf("%-18s %8s %8.4f %8.4f %6.4f %6lld %6d %6d %8lld %8lld\n", s.scenario.c_str(),
                "dvae", s.dvae.mota, s.dvae.motp, s.dvae.idf1, s.dvae.ids, s.dvae.mt, s.dvae.ml,
                s.dvae.fp, s.dvae.fn);
    std::printf("%-18s %8s %8.4f %8.4f %6.4f %6lld %6d %6d %8lld %8lld\n", "", "linear",
                s.linear.mota, s.linear.motp, s.linear.idf1, s.linear.ids, s.linear.mt,
                s.linear.ml, s.linear.fp, s.linear.fn);
  }
  std::printf("%-18s %8s %8.4f  |  %8s %8.4f\n", "overall", "dvae", result.overall_dvae.mota,
              "linear", result.overall_linear.mota);
  return 0;
}

struct ReportOpts {
  std::string in;
  std::string scene;
  std::string results;
  std::string out;
};

int run_report(const ReportOpts& o, const CLI::App* cmd, int argc, char** argv) {
  ManifestScope manifest(cmd, argc, argv, 0);
  fs::create_directories(o.out);
  if (!o.scene.empty()) {
    // Trajectory overlay for one scene (+ optionally a results file).
    const auto scene = dvu::dataio::load_scene(o.scene);
    dvu::tracker::TrackResult res;
    dvu::tracker::TrackResult* res_ptr = nullptr;
    if (!o.results.empty()) {
      const auto tracks = dvu::dataio::read_mot_tracks(o.results, scene.img_w, scene.img_h);
      res.n_objects = static_cast<int>(tracks.size());
      res.state = dvu::tracker::TrackState::allocate(scene.data.T, res.n_objects, false);
      for (int n = 0; n < res.n_objects; ++n) {
        for (const auto& [frame, box] : tracks[n].boxes) {
          if (frame >= 1 && frame <= scene.data.T) res.state.m[frame - 1][n] = box.vec();
        }
      }
      res_ptr = &res;
      manifest.add_input(o.results);
    }
    dvu::report::write_text(fs::path(o.out) / "trajectories.svg",
                            dvu::report::trajectory_svg(scene, res_ptr, scene.name));
    manifest.add_output("trajectories.svg");
    manifest.write(fs::path(o.out) / "manifest.json");
    std::cout << "trajectory overlay -> " << o.out << "\n";
    return 0;
  }

  // Re-emit summary artifacts from a benchmark report.json.
  const fs::path in_json = fs::path(o.in) / "report.json";
  std::ifstream in(in_json);
  if (!in) throw dvu::DataError("cannot open " + in_json.string());
  manifest.add_input(in_json);
  json j;
  in >> j;
  std::vector<std::tuple<std::string, std::string, dvu::metrics::MetricReport>> rows;
  std::vector<dvu::report::Series> series{{"dvae", "", {}}, {"linear", "", {}}};
  double x = 0.0;
  for (const auto& s : j["scenarios"]) {
    for (const char* method : {"dvae", "linear"}) {
      dvu::metrics::MetricReport r;
      const auto& m = s[method];
      r.mota = m.value("mota", 0.0);
      r.motp = m.value("motp", 0.0);
      r.idf1 = m.value("idf1", 0.0);
      r.ids = m.value("ids", 0LL);
      r.ids_pct = m.value("ids_pct", 0.0);
      r.fp = m.value("fp", 0LL);
      r.fp_pct = m.value("fp_pct", 0.0);
      r.fn = m.value("fn", 0LL);
      r.fn_pct = m.value("fn_pct", 0.0);
      r.mt = m.value("mt", 0);
      r.ml = m.value("ml", 0);
      r.gt_total = m.value("gt_total", 0LL);
      rows.emplace_back(s.value("scenario", ""), method, r);
    }
    series[0].points.emplace_back(x, s["dvae"].value("mota", 0.0));
    series[1].points.emplace_back(x, s["linear"].value("mota", 0.0));
    x += 1.0;
  }
  dvu::report::write_text(fs::path(o.out) / "summary.csv", dvu::report::metrics_csv(rows));
  dvu::report::write_text(
      fs::path(o.out) / "mota_by_scenario.svg",
      dvu::report::line_chart_svg("MOTA by scenario index", "scenario #", "MOTA", series));
  manifest.add_output("summary.csv");
  manifest.add_output("mota_by_scenario.svg");
  manifest.write(fs::path(o.out) / "manifest.json");
  std::cout << "summary -> " << o.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised multi-object tracking with a dynamical variational autoencoder"};
  app.set_version_flag("--version", std::string(dvu::kVersion) + " (checkpoint format v" +
                                        std::to_string(dvu::kCheckpointFormatVersion) + ")");
  app.add_flag("--json-errors", g_json_errors, "machine-readable errors on stderr");
  app.require_subcommand(1);

  SynthDataOpts sd;
  auto* sd_cmd = app.add_subcommand("synth-data", "generate synthetic trajectory datasets");
  sd_cmd->add_option("--out", sd.out, "output directory")->required();
  sd_cmd->add_option("--train", sd.train, "training sequences");
  sd_cmd->add_option("--val", sd.val, "validation sequences");
  sd_cmd->add_option("--length", sd.length, "frames per sequence");
  sd_cmd->add_option("--s-max", sd.s_max, "max segments per coordinate");
  sd_cmd->add_option("--seed", sd.seed, "rng seed");
  sd_cmd->add_option("--config", "flat key=value config file");

  PretrainOpts pt;
  auto* pt_cmd = app.add_subcommand("pretrain", "train the dynamics model on a dataset");
  pt_cmd->add_option("--data", pt.data, "dataset directory (train.txt/val.txt)")->required();
  pt_cmd->add_option("--out", pt.out, "checkpoint path")->required();
  pt_cmd->add_option("--lr", pt.lr, "learning rate");
  pt_cmd->add_option("--batch", pt.batch, "batch size");
  pt_cmd->add_option("--patience", pt.patience, "early-stopping patience (epochs)");
  pt_cmd->add_option("--max-epochs", pt.max_epochs, "epoch limit");
  pt_cmd->add_option("--seed", pt.seed, "rng seed");
  pt_cmd->add_option("--threads", pt.threads, "worker threads (0 = auto)");
  pt_cmd->add_option("--log-every", pt.log_every, "progress print period");
  pt_cmd->add_option("--config", "flat key=value config file");

  TrackOpts tr;
  auto* tr_cmd = app.add_subcommand("track", "run the tracker on a detection file or scene dir");
  tr_cmd->add_option("--ckpt", tr.ckpt, "model checkpoint (required for --dynamics dvae)");
  tr_cmd->add_option("--detections", tr.detections, "det.txt or scene directory")->required();
  tr_cmd->add_option("--out", tr.out, "output directory")->required();
  tr_cmd->add_option("--iters", tr.iters, "EM iterations");
  tr_cmd->add_option("--r-phi", tr.r_phi, "observation noise ratio");
  tr_cmd->add_option("--init-window", tr.init_window, "cascade window length J");
  tr_cmd->add_option("--init-iters", tr.init_iters, "cascade iterations I0");
  tr_cmd->add_flag("--fine-tune", tr.fine_tune, "fine-tune the model per iteration");
  tr_cmd->add_option("--fine-tune-lr", tr.fine_tune_lr, "fine-tune learning rate");
  tr_cmd->add_flag("--m-step-phi", tr.m_step_phi, "re-estimate observation covariances");
  tr_cmd->add_option("--dynamics", tr.dynamics, "dvae|linear");
  tr_cmd->add_option("--seed", tr.seed, "rng seed");
  tr_cmd->add_option("--img-width", tr.img_width, "image width for det.txt input");
  tr_cmd->add_option("--img-height", tr.img_height, "image height for det.txt input");
  tr_cmd->add_option("--n-objects", tr.n_objects, "object count override (0 = frame-1 count)");
  tr_cmd->add_option("--config", "flat key=value config file");

  EvaluateOpts ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "CLEAR-MOT metrics for a result file");
  ev_cmd->add_option("--gt", ev.gt, "ground-truth file")->required();
  ev_cmd->add_option("--results", ev.results, "tracking results file")->required();
  ev_cmd->add_option("--out", ev.out, "report JSON path")->required();
  ev_cmd->add_option("--iou-thr", ev.iou_thr, "matching threshold");
  ev_cmd->add_option("--config", "flat key=value config file");

  BuildBenchmarkOpts bb;
  auto* bb_cmd = app.add_subcommand("build-benchmark", "build tracking scenes from MOT files");
  bb_cmd->add_option("--gt", bb.gt, "gt.txt")->required();
  bb_cmd->add_option("--det", bb.det, "det.txt")->required();
  bb_cmd->add_option("--out", bb.out, "output directory")->required();
  bb_cmd->add_option("--length", bb.length, "frames per scene");
  bb_cmd->add_option("--tracks", bb.tracks, "tracks per scene");
  bb_cmd->add_option("--img-width", bb.img_width, "image width in pixels");
  bb_cmd->add_option("--img-height", bb.img_height, "image height in pixels");
  bb_cmd->add_option("--seed", bb.seed, "rng seed");
  bb_cmd->add_option("--config", "flat key=value config file");

  SynthBenchmarkOpts sb;
  auto* sb_cmd = app.add_subcommand("synth-benchmark", "generate the synthetic scene suite");
  sb_cmd->add_option("--out", sb.out, "output directory")->required();
  sb_cmd->add_option("--scenarios", sb.scenarios, "scenario names")->delimiter(',');
  sb_cmd->add_option("--noise", sb.noise, "detection noise (fraction of box size)");
  sb_cmd->add_option("--scenes-per", sb.scenes_per, "scenes per scenario");
  sb_cmd->add_option("--length", sb.length, "frames per scene");
  sb_cmd->add_option("--seed", sb.seed, "rng seed");
  sb_cmd->add_option("--config", "flat key=value config file");

  BenchmarkOpts bm;
  auto* bm_cmd = app.add_subcommand("benchmark", "run both methods on a suite and compare");
  bm_cmd->add_option("--suite", bm.suite, "suite kind (synthetic)");
  bm_cmd->add_option("--scenes", bm.scenes_dir, "reuse an existing suite directory");
  bm_cmd->add_option("--ckpt", bm.ckpt, "model checkpoint");
  bm_cmd->add_flag("--pretrain-first", bm.pretrain_first, "train a model before benchmarking");
  bm_cmd->add_option("--out", bm.out, "output directory")->required();
  bm_cmd->add_option("--scenarios", bm.scenarios, "scenario names")->delimiter(',');
  bm_cmd->add_option("--noise", bm.noise, "detection noise");
  bm_cmd->add_option("--scenes-per", bm.scenes_per, "scenes per scenario");
  bm_cmd->add_option("--length", bm.length, "frames per scene");
  bm_cmd->add_option("--iters", bm.iters, "EM iterations");
  bm_cmd->add_option("--r-phi", bm.r_phi, "observation noise ratio");
  bm_cmd->add_option("--init-window", bm.init_window, "cascade window length");
  bm_cmd->add_option("--init-iters", bm.init_iters, "cascade iterations");
  bm_cmd->add_option("--seed", bm.seed, "rng seed");
  bm_cmd->add_option("--jobs", bm.jobs, "parallel scenes");
  bm_cmd->add_option("--r-phi-sweep", bm.r_phi_sweep, "ablation values")->delimiter(',');
  bm_cmd->add_option("--config", "flat key=value config file");

  ReportOpts rp;
  auto* rp_cmd = app.add_subcommand("report", "re-emit summary tables and plots");
  rp_cmd->add_option("--in", rp.in, "benchmark output directory");
  rp_cmd->add_option("--scene", rp.scene, "scene directory for a trajectory overlay");
  rp_cmd->add_option("--results", rp.results, "results.txt to overlay");
  rp_cmd->add_option("--out", rp.out, "output directory")->required();
  rp_cmd->add_option("--config", "flat key=value config file");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = splice_config_args(args);
    std::reverse(args.begin(), args.end());  // CLI11 consumes reversed args
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage error
  } catch (const dvu::DataError& e) {
    report_error("data", e.what());
    return 2;
  }

  try {
    if (sd_cmd->parsed()) return run_synth_data(sd, sd_cmd, argc, argv);
    if (pt_cmd->parsed()) return run_pretrain(pt, pt_cmd, argc, argv);
    if (tr_cmd->parsed()) return run_track(tr, tr_cmd, argc, argv);
    if (ev_cmd->parsed()) return run_evaluate(ev, ev_cmd, argc, argv);
    if (bb_cmd->parsed()) return run_build_benchmark(bb, bb_cmd, argc, argv);
    if (sb_cmd->parsed()) return run_synth_benchmark(sb, sb_cmd, argc, argv);
    if (bm_cmd->parsed()) return run_benchmark(bm, bm_cmd, argc, argv);
    if (rp_cmd->parsed()) return run_report(rp, rp_cmd, argc, argv);
  } catch (const dvu::ConfigError& e) {
    report_error("config", e.what());
    return 1;
  } catch (const dvu::NumericError& e) {
    report_error("numeric", e.what());
    return 3;
  } catch (const dvu::DataError& e) {
    report_error("data", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 2;
  }
  return 0;
}
