#include "dvu/bench.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <thread>

#include <json.hpp>

#include "dvu/error.hpp"
#include "dvu/report.hpp"
#include "dvu/rng.hpp"
#include "dvu/vkf.hpp"

namespace dvu::bench {

namespace {

metrics::TrackSet history_tracks(const std::vector<std::vector<Eigen::Vector4d>>& m, int N) {
  metrics::TrackSet out;
  for (int n = 0; n < N; ++n) {
    metrics::Track tr;
    tr.id = n + 1;
    for (std::size_t t = 0; t < m.size(); ++t) {
      BBox b = BBox::from_vec(m[t][n]);
      if (b.width() < 1e-6) b.r = b.l + 1e-6;
      if (b.height() < 1e-6) b.t = b.b + 1e-6;
      tr.boxes[static_cast<int>(t) + 1] = b;
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<double> mota_curve(const tracker::TrackResult& res, const metrics::TrackSet& gt) {
  std::vector<double> curve;
  for (const auto& m : res.m_history) {
    curve.push_back(metrics::evaluate(gt, history_tracks(m, res.n_objects)).mota);
  }
  return curve;
}

nlohmann::json report_json(const metrics::MetricReport& r) {
  return {{"mota", r.mota},       {"motp", r.motp},     {"idf1", r.idf1},
          {"ids", r.ids},         {"ids_pct", r.ids_pct}, {"mt", r.mt},
          {"ml", r.ml},           {"fp", r.fp},         {"fp_pct", r.fp_pct},
          {"fn", r.fn},           {"fn_pct", r.fn_pct}, {"gt_total", r.gt_total},
          {"matches", r.matches}, {"idtp", r.idtp},     {"hyp_total", r.hyp_total}};
}

}  // namespace

BenchmarkResult run_suite(const std::vector<dataio::Scene>& scenes, const srnn::SrnnParams& params,
                          const BenchmarkConfig& cfg) {
  if (scenes.empty()) throw DataError("run_suite: empty suite (zero scenes)");
  BenchmarkResult result;
  result.scenes.resize(scenes.size());

  // First scene per scenario records its iteration history for the curves.
  std::set<std::string> curve_scenes;
  std::vector<char> record(scenes.size(), 0);
  if (cfg.record_curves) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      if (seen.insert(scenes[i].scenario).second) record[i] = 1;
    }
  }

  std::vector<std::pair<std::vector<double>, std::vector<double>>> curves(scenes.size());
  auto run_one = [&](std::size_t i) {
    const dataio::Scene& scene = scenes[i];
    tracker::TrackerConfig tc = cfg.tracker;
    tc.seed = mix64(cfg.tracker.seed ^ mix64(i));
    tc.record_history = record[i] != 0;

    tc.dynamics = tracker::Dynamics::kDvae;
    const tracker::TrackResult dvae_res = tracker::track(scene.data, &params, tc);
    tracker::TrackerConfig lc = tc;
    const tracker::TrackResult lin_res = vkf::vkf_track(scene.data, lc);

    SceneRun run;
    run.scene = scene.name;
    run.scenario = scene.scenario;
    run.dvae = metrics::evaluate(scene.gt, dataio::result_tracks(dvae_res));
    run.linear = metrics::evaluate(scene.gt, dataio::result_tracks(lin_res));
    result.scenes[i] = std::move(run);
    if (record[i]) {
      curves[i] = {mota_curve(dvae_res, scene.gt), mota_curve(lin_res, scene.gt)};
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1 || scenes.size() == 1) {
    for (std::size_t i = 0; i < scenes.size(); ++i) run_one(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t i = static_cast<std::size_t>(w); i < scenes.size();
             i += static_cast<std::size_t>(jobs)) {
          run_one(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  // Aggregate per scenario (stable order of first appearance) and overall.
  std::vector<std::string> order;
  for (const SceneRun& r : result.scenes) {
    if (std::find(order.begin(), order.end(), r.scenario) == order.end()) {
      order.push_back(r.scenario);
    }
  }
  std::vector<metrics::MetricReport> all_dvae, all_linear;
  for (const std::string& sc : order) {
    ScenarioSummary sum;
    sum.scenario = sc;
    std::vector<metrics::MetricReport> dv, ln;
    for (const SceneRun& r : result.scenes) {
      if (r.scenario != sc) continue;
      dv.push_back(r.dvae);
      ln.push_back(r.linear);
      ++sum.n_scenes;
    }
    sum.dvae = metrics::aggregate(dv);
    sum.linear = metrics::aggregate(ln);
    result.scenarios.push_back(std::move(sum));
    all_dvae.insert(all_dvae.end(), dv.begin(), dv.end());
    all_linear.insert(all_linear.end(), ln.begin(), ln.end());
  }
  result.overall_dvae = metrics::aggregate(all_dvae);
  result.overall_linear = metrics::aggregate(all_linear);

  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!record[i]) continue;
    result.mota_curve_dvae[scenes[i].scenario] = curves[i].first;
    result.mota_curve_linear[scenes[i].scenario] = curves[i].second;
  }
  return result;
}

void write_report(const std::filesystem::path& out_dir, const BenchmarkResult& result,
                  const std::vector<dataio::Scene>& scenes,
                  const std::map<std::string, std::string>& config_echo) {
  std::filesystem::create_directories(out_dir);

  nlohmann::json j;
  j["config"] = config_echo;
  j["scenarios"] = nlohmann::json::array();
  for (const ScenarioSummary& s : result.scenarios) {
    j["scenarios"].push_back({{"scenario", s.scenario},
                              {"n_scenes", s.n_scenes},
                              {"dvae", report_json(s.dvae)},
                              {"linear", report_json(s.linear)}});
  }
  j["overall"] = {{"dvae", report_json(result.overall_dvae)},
                  {"linear", report_json(result.overall_linear)}};
  j["scenes"] = nlohmann::json::array();
  for (const SceneRun& r : result.scenes) {
    j["scenes"].push_back({{"scene", r.scene},
                           {"scenario", r.scenario},
                           {"dvae", report_json(r.dvae)},
                           {"linear", report_json(r.linear)}});
  }
  {
    std::ofstream out(out_dir / "report.json", std::ios::trunc);
    if (!out) throw DataError("cannot write report.json");
    out << j.dump(2) << "\n";
  }

  std::vector<std::tuple<std::string, std::string, metrics::MetricReport>> rows;
  for (const ScenarioSummary& s : result.scenarios) {
    rows.emplace_back(s.scenario, "dvae", s.dvae);
    rows.emplace_back(s.scenario, "linear", s.linear);
  }
  rows.emplace_back("overall", "dvae", result.overall_dvae);
  rows.emplace_back("overall", "linear", result.overall_linear);
  report::write_text(out_dir / "report.csv", report::metrics_csv(rows));

  // MOTA vs iteration, one chart per scenario with a recorded curve.
  for (const auto& [scenario, curve] : result.mota_curve_dvae) {
    std::vector<report::Series> series;
    report::Series s1{"dvae", "", {}};
    for (std::size_t i = 0; i < curve.size(); ++i) {
      s1.points.emplace_back(static_cast<double>(i + 1), curve[i]);
    }
    series.push_back(std::move(s1));
    auto it = result.mota_curve_linear.find(scenario);
    if (it != result.mota_curve_linear.end()) {
      report::Series s2{"linear", "", {}};
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        s2.points.emplace_back(static_cast<double>(i + 1), it->second[i]);
      }
      series.push_back(std::move(s2));
    }
    report::write_text(out_dir / ("mota_vs_iteration_" + scenario + ".svg"),
                       report::line_chart_svg("MOTA vs iteration (" + scenario + ")", "iteration",
                                              "MOTA", series));
  }

  // Trajectory overlays for the first scene of each scenario (ground truth
  // plus detections; estimates are drawn by the CLI track command instead).
  std::set<std::string> seen;
  for (const dataio::Scene& scene : scenes) {
    if (!seen.insert(scene.scenario).second) continue;
    report::write_text(out_dir / ("trajectories_" + scene.scenario + ".svg"),
                       report::trajectory_svg(scene, nullptr, scene.name + " (" + scene.scenario +
                                                                  ")"));
  }
}

}  // namespace dvu::bench
