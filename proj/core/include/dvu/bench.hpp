#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dvu/dataio.hpp"
#include "dvu/metrics.hpp"
#include "dvu/srnn.hpp"
#include "dvu/tracker.hpp"

namespace dvu::bench {

struct BenchmarkConfig {
  tracker::TrackerConfig tracker;  // dynamics field is ignored; both methods run
  int jobs = 1;
  bool record_curves = true;  // per-iteration MOTA on the first scene per scenario
};

struct SceneRun {
  std::string scene;
  std::string scenario;
  metrics::MetricReport dvae;
  metrics::MetricReport linear;
};

struct ScenarioSummary {
  std::string scenario;
  int n_scenes = 0;
  metrics::MetricReport dvae;
  metrics::MetricReport linear;
};

struct BenchmarkResult {
  std::vector<SceneRun> scenes;
  std::vector<ScenarioSummary> scenarios;
  metrics::MetricReport overall_dvae;
  metrics::MetricReport overall_linear;
  // scenario -> MOTA after each EM iteration (first scene of the scenario).
  std::map<std::string, std::vector<double>> mota_curve_dvae;
  std::map<std::string, std::vector<double>> mota_curve_linear;
};

// Runs both methods on every scene and evaluates against the scene ground
// truth. Scene i uses the seed stream (cfg.tracker.seed, i), so --jobs only
// changes the schedule, never the numbers.
BenchmarkResult run_suite(const std::vector<dataio::Scene>& scenes, const srnn::SrnnParams& params,
                          const BenchmarkConfig& cfg);

// Emits report.json, report.csv and SVG plots under out_dir.
void write_report(const std::filesystem::path& out_dir, const BenchmarkResult& result,
                  const std::vector<dataio::Scene>& scenes,
                  const std::map<std::string, std::string>& config_echo);

}  // namespace dvu::bench
