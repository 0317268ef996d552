#include "dvu/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dvu/error.hpp"

namespace dvu::report {

namespace {

constexpr int kW = 640, kH = 420;
constexpr int kMarginL = 64, kMarginR = 20, kMarginT = 36, kMarginB = 48;

struct Range {
  double lo = 0.0, hi = 1.0;
  void grow(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double span() const { return hi - lo > 1e-12 ? hi - lo : 1.0; }
};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series) {
  Range xr{1e300, -1e300}, yr{1e300, -1e300};
  for (const Series& s : series) {
    for (const auto& [x, y] : s.points) {
      xr.grow(x);
      yr.grow(y);
    }
  }
  if (xr.lo > xr.hi) {
    xr = {0, 1};
    yr = {0, 1};
  }
  const double px0 = kMarginL, px1 = kW - kMarginR;
  const double py0 = kH - kMarginB, py1 = kMarginT;
  auto X = [&](double x) { return px0 + (x - xr.lo) / xr.span() * (px1 - px0); };
  auto Y = [&](double y) { return py0 + (y - yr.lo) / yr.span() * (py1 - py0); };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
      << "' font-family='sans-serif' font-size='12'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' font-size='14'>" << esc(title)
      << "</text>\n";
  // Axes.
  svg << "<line x1='" << px0 << "' y1='" << py0 << "' x2='" << px1 << "' y2='" << py0
      << "' stroke='black'/>\n";
  svg << "<line x1='" << px0 << "' y1='" << py0 << "' x2='" << px0 << "' y2='" << py1
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = xr.lo + xr.span() * i / 5.0;
    const double fy = yr.lo + yr.span() * i / 5.0;
    svg << "<text x='" << X(fx) << "' y='" << py0 + 16 << "' text-anchor='middle'>"
        << std::round(fx * 1000) / 1000 << "</text>\n";
    svg << "<text x='" << px0 - 6 << "' y='" << Y(fy) + 4 << "' text-anchor='end'>"
        << std::round(fy * 1000) / 1000 << "</text>\n";
    svg << "<line x1='" << px0 << "' y1='" << Y(fy) << "' x2='" << px1 << "' y2='" << Y(fy)
        << "' stroke='#dddddd'/>\n";
  }
  svg << "<text x='" << (px0 + px1) / 2 << "' y='" << kH - 10 << "' text-anchor='middle'>"
      << esc(x_label) << "</text>\n";
  svg << "<text x='16' y='" << (py0 + py1) / 2 << "' text-anchor='middle' transform='rotate(-90 16 "
      << (py0 + py1) / 2 << ")'>" << esc(y_label) << "</text>\n";

  int ci = 0;
  for (const Series& s : series) {
    const std::string color = s.color.empty() ? kPalette[ci % 6] : s.color;
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : s.points) svg << X(x) << "," << Y(y) << " ";
    svg << "'/>\n";
    svg << "<text x='" << px1 - 120 << "' y='" << py1 + 16 * ci + 12 << "' fill='" << color << "'>"
        << esc(s.name) << "</text>\n";
    ++ci;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string trajectory_svg(const dataio::Scene& scene, const tracker::TrackResult* result,
                           const std::string& title) {
  // Fit the view to all ground-truth centers.
  Range xr{1e300, -1e300}, yr{1e300, -1e300};
  for (const auto& tr : scene.gt) {
    for (const auto& [t, b] : tr.boxes) {
      xr.grow(b.cx());
      yr.grow(b.cy());
    }
  }
  xr.lo -= 0.1;
  xr.hi += 0.1;
  yr.lo -= 0.1;
  yr.hi += 0.1;
  const double px0 = kMarginL, px1 = kW - kMarginR;
  const double py0 = kH - kMarginB, py1 = kMarginT;
  auto X = [&](double x) { return px0 + (x - xr.lo) / xr.span() * (px1 - px0); };
  auto Y = [&](double y) { return py0 + (y - yr.lo) / yr.span() * (py1 - py0); };

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH
      << "' font-family='sans-serif' font-size='12'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  svg << "<text x='" << kW / 2 << "' y='20' text-anchor='middle' font-size='14'>" << esc(title)
      << "</text>\n";

  // Detections as small dots, colored by true label when known.
  for (int t = 0; t < scene.data.T; ++t) {
    for (std::size_t k = 0; k < scene.data.detections[t].size(); ++k) {
      const BBox& b = scene.data.detections[t][k];
      int label = -1;
      if (t < static_cast<int>(scene.det_labels.size()) &&
          k < scene.det_labels[t].size()) {
        label = scene.det_labels[t][k];
      }
      const std::string color = label >= 0 ? kPalette[label % 6] : "#999999";
      svg << "<circle cx='" << X(b.cx()) << "' cy='" << Y(b.cy()) << "' r='1.6' fill='" << color
          << "' fill-opacity='0.45'/>\n";
    }
  }
  // Ground truth: solid lines.
  int ci = 0;
  for (const auto& tr : scene.gt) {
    svg << "<polyline fill='none' stroke='" << kPalette[ci % 6] << "' stroke-width='1.8' points='";
    for (const auto& [t, b] : tr.boxes) svg << X(b.cx()) << "," << Y(b.cy()) << " ";
    svg << "'/>\n";
    svg << "<text x='" << px1 - 150 << "' y='" << py1 + 16 * ci + 12 << "' fill='"
        << kPalette[ci % 6] << "'>object " << tr.id << " (gt solid / est dashed)</text>\n";
    ++ci;
  }
  // Estimates: dashed lines.
  if (result) {
    for (int n = 0; n < result->n_objects; ++n) {
      svg << "<polyline fill='none' stroke='" << kPalette[n % 6]
          << "' stroke-width='1.5' stroke-dasharray='5,3' points='";
      for (int t = 0; t < scene.data.T; ++t) {
        const BBox b = BBox::from_vec(result->state.m[t][n]);
        svg << X(b.cx()) << "," << Y(b.cy()) << " ";
      }
      svg << "'/>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

std::string metrics_csv(
    const std::vector<std::tuple<std::string, std::string, metrics::MetricReport>>& rows) {
  std::ostringstream csv;
  csv << "scenario,method,mota,motp,idf1,ids,ids_pct,mt,ml,fp,fp_pct,fn,fn_pct,gt_total\n";
  for (const auto& [scenario, method, r] : rows) {
    csv << scenario << "," << method << "," << r.mota << "," << r.motp << "," << r.idf1 << ","
        << r.ids << "," << r.ids_pct << "," << r.mt << "," << r.ml << "," << r.fp << ","
        << r.fp_pct << "," << r.fn << "," << r.fn_pct << "," << r.gt_total << "\n";
  }
  return csv.str();
}

}  // namespace dvu::report
