#include "dvu/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "dvu/error.hpp"

namespace dvu::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.r, b.r) - std::max(a.l, b.l);
  const double ih = std::min(a.t, b.t) - std::max(a.b, b.b);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

Assignment hungarian(const Eigen::MatrixXd& cost) {
  const int n_rows = static_cast<int>(cost.rows());
  const int n_cols = static_cast<int>(cost.cols());
  Assignment result;
  result.row_to_col.assign(n_rows, -1);
  if (n_rows == 0 || n_cols == 0) return result;

  // The potentials method needs rows <= cols; transpose if necessary.
  const bool transposed = n_rows > n_cols;
  const int n = transposed ? n_cols : n_rows;
  const int m = transposed ? n_rows : n_cols;

  // Forbidden pairs become a finite surrogate that dominates any sum of real
  // costs but stays small enough that potential arithmetic keeps full
  // precision (a huge sentinel would swamp sub-unit cost differences).
  double max_finite = 0.0;
  for (int i = 0; i < n_rows; ++i) {
    for (int j = 0; j < n_cols; ++j) {
      const double c = cost(i, j);
      if (std::isinf(c)) continue;
      if (!std::isfinite(c)) throw NumericError("hungarian: NaN cost");
      max_finite = std::max(max_finite, std::abs(c));
    }
  }
  const double big = (max_finite + 1.0) * (n + 1.0);
  auto at = [&](int i, int j) {
    const double c = transposed ? cost(j, i) : cost(i, j);
    return std::isinf(c) ? big : c;
  };

  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  for (int j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const int row = transposed ? j - 1 : p[j] - 1;
    const int col = transposed ? p[j] - 1 : j - 1;
    // Forbidden pairs the matching was forced through stay unassigned.
    if (std::isinf(cost(row, col))) continue;
    result.row_to_col[row] = col;
    result.total_cost += cost(row, col);
  }
  return result;
}

MetricReport evaluate(const TrackSet& gt, const TrackSet& hyp, double iou_threshold) {
  long long gt_total = 0;
  for (const Track& g : gt) gt_total += static_cast<long long>(g.boxes.size());
  if (gt_total == 0) throw DataError("evaluate: empty ground truth (MOTA undefined)");

  std::set<int> frames;
  for (const Track& g : gt)
    for (const auto& [t, b] : g.boxes) frames.insert(t);
  for (const Track& h : hyp)
    for (const auto& [t, b] : h.boxes) frames.insert(t);

  MetricReport rep;
  rep.gt_total = gt_total;
  rep.n_gt_tracks = static_cast<int>(gt.size());
  rep.n_hyp_tracks = static_cast<int>(hyp.size());

  std::map<int, int> carry;         // gt index -> hyp index, current match
  std::map<int, int> last_matched;  // gt index -> hyp index at last match (for IDS)
  std::map<int, long long> covered; // gt index -> matched frame count
  double motp_acc = 0.0;

  for (int t : frames) {
    std::vector<int> gts, hyps;
    for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi)
      if (gt[gi].boxes.count(t)) gts.push_back(gi);
    for (int hi = 0; hi < static_cast<int>(hyp.size()); ++hi)
      if (hyp[hi].boxes.count(t)) hyps.push_back(hi);

    std::vector<char> gt_done(gts.size(), 0), hyp_done(hyps.size(), 0);
    std::vector<std::pair<int, int>> matched;  // (gt index, hyp index)

    // Keep previous-frame matches that still overlap.
    for (std::size_t a = 0; a < gts.size(); ++a) {
      auto it = carry.find(gts[a]);
      if (it == carry.end()) continue;
      for (std::size_t b = 0; b < hyps.size(); ++b) {
        if (hyp_done[b] || hyps[b] != it->second) continue;
        if (iou(gt[gts[a]].boxes.at(t), hyp[hyps[b]].boxes.at(t)) >= iou_threshold) {
          matched.emplace_back(gts[a], hyps[b]);
          gt_done[a] = 1;
          hyp_done[b] = 1;
        }
        break;
      }
    }

    // Hungarian on the remainder, cost 1 - IoU, pairs below threshold forbidden.
    std::vector<int> free_g, free_h;
    for (std::size_t a = 0; a < gts.size(); ++a)
      if (!gt_done[a]) free_g.push_back(gts[a]);
    for (std::size_t b = 0; b < hyps.size(); ++b)
      if (!hyp_done[b]) free_h.push_back(hyps[b]);
    if (!free_g.empty() && !free_h.empty()) {
      Eigen::MatrixXd cost(free_g.size(), free_h.size());
      for (std::size_t a = 0; a < free_g.size(); ++a) {
        for (std::size_t b = 0; b < free_h.size(); ++b) {
          const double ov = iou(gt[free_g[a]].boxes.at(t), hyp[free_h[b]].boxes.at(t));
          cost(a, b) = ov >= iou_threshold ? 1.0 - ov : kInf;
        }
      }
      const Assignment asg = hungarian(cost);
      for (std::size_t a = 0; a < free_g.size(); ++a) {
        if (asg.row_to_col[a] >= 0) matched.emplace_back(free_g[a], free_h[asg.row_to_col[a]]);
      }
    }

    // Update carried matches only for gt present this frame.
    for (int gi : gts) carry.erase(gi);
    long long frame_matches = 0;
    for (const auto& [gi, hi] : matched) {
      ++frame_matches;
      motp_acc += iou(gt[gi].boxes.at(t), hyp[hi].boxes.at(t));
      auto lm = last_matched.find(gi);
      if (lm != last_matched.end() && lm->second != hi) ++rep.ids;
      last_matched[gi] = hi;
      carry[gi] = hi;
      covered[gi]++;
    }
    rep.matches += frame_matches;
    rep.fn += static_cast<long long>(gts.size()) - frame_matches;
    rep.fp += static_cast<long long>(hyps.size()) - frame_matches;
  }

  rep.mota = 1.0 - static_cast<double>(rep.fn + rep.fp + rep.ids) / static_cast<double>(gt_total);
  rep.motp = rep.matches > 0 ? motp_acc / static_cast<double>(rep.matches) : 0.0;
  rep.fn_pct = 100.0 * static_cast<double>(rep.fn) / static_cast<double>(gt_total);
  rep.fp_pct = 100.0 * static_cast<double>(rep.fp) / static_cast<double>(gt_total);
  rep.ids_pct = 100.0 * static_cast<double>(rep.ids) / static_cast<double>(gt_total);

  for (int gi = 0; gi < static_cast<int>(gt.size()); ++gi) {
    const long long life = static_cast<long long>(gt[gi].boxes.size());
    if (life == 0) continue;
    const double ratio = static_cast<double>(covered[gi]) / static_cast<double>(life);
    if (ratio >= 0.8) ++rep.mt;
    if (ratio <= 0.2) ++rep.ml;
  }

  // IDF1 via global id matching on frame-overlap counts.
  for (const Track& h : hyp) rep.hyp_total += static_cast<long long>(h.boxes.size());
  if (!hyp.empty()) {
    Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(gt.size(), hyp.size());
    for (std::size_t gi = 0; gi < gt.size(); ++gi) {
      for (std::size_t hi = 0; hi < hyp.size(); ++hi) {
        long long c = 0;
        for (const auto& [t, gb] : gt[gi].boxes) {
          auto it = hyp[hi].boxes.find(t);
          if (it != hyp[hi].boxes.end() && iou(gb, it->second) >= iou_threshold) ++c;
        }
        overlap(gi, hi) = static_cast<double>(c);
      }
    }
    const Assignment asg = hungarian(-overlap);
    for (std::size_t gi = 0; gi < gt.size(); ++gi) {
      if (asg.row_to_col[gi] >= 0) rep.idtp += overlap(gi, asg.row_to_col[gi]);
    }
    rep.idf1 = 2.0 * rep.idtp / static_cast<double>(gt_total + rep.hyp_total);
  }
  return rep;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
  MetricReport out;
  double motp_weighted = 0.0;
  for (const MetricReport& r : reports) {
    out.ids += r.ids;
    out.fp += r.fp;
    out.fn += r.fn;
    out.mt += r.mt;
    out.ml += r.ml;
    out.gt_total += r.gt_total;
    out.hyp_total += r.hyp_total;
    out.matches += r.matches;
    out.idtp += r.idtp;
    out.n_gt_tracks += r.n_gt_tracks;
    out.n_hyp_tracks += r.n_hyp_tracks;
    motp_weighted += r.motp * static_cast<double>(r.matches);
  }
  if (out.gt_total == 0) throw DataError("aggregate: no ground truth");
  out.mota = 1.0 - static_cast<double>(out.fn + out.fp + out.ids) / static_cast<double>(out.gt_total);
  out.motp = out.matches > 0 ? motp_weighted / static_cast<double>(out.matches) : 0.0;
  out.idf1 = out.gt_total + out.hyp_total > 0
                 ? 2.0 * out.idtp / static_cast<double>(out.gt_total + out.hyp_total)
                 : 0.0;
  out.fn_pct = 100.0 * static_cast<double>(out.fn) / static_cast<double>(out.gt_total);
  out.fp_pct = 100.0 * static_cast<double>(out.fp) / static_cast<double>(out.gt_total);
  out.ids_pct = 100.0 * static_cast<double>(out.ids) / static_cast<double>(out.gt_total);
  return out;
}

}  // namespace dvu::metrics
