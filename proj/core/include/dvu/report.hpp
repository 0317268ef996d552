#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dvu/dataio.hpp"
#include "dvu/metrics.hpp"
#include "dvu/tracker.hpp"

namespace dvu::report {

struct Series {
  std::string name;
  std::string color;  // CSS color
  std::vector<std::pair<double, double>> points;
};

// Minimal line chart with axes, ticks and a legend.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

// Center-trajectory overlay of ground truth (solid), estimates (dashed) and
// detections (dots), one color per object.
std::string trajectory_svg(const dataio::Scene& scene, const tracker::TrackResult* result,
                           const std::string& title);

void write_text(const std::filesystem::path& path, const std::string& content);

// One CSV row per (scenario, method) with the full metric set.
std::string metrics_csv(
    const std::vector<std::tuple<std::string, std::string, metrics::MetricReport>>& rows);

}  // namespace dvu::report
