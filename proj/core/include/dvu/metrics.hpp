#pragma once

#include <Eigen/Core>
#include <map>
#include <vector>

#include "dvu/bbox.hpp"

namespace dvu::metrics {

// Intersection-over-union of two boxes, in [0, 1], symmetric.
double iou(const BBox& a, const BBox& b);

struct Assignment {
  std::vector<int> row_to_col;  // -1 where unassigned
  double total_cost = 0.0;      // sum over assigned pairs
};

// Minimum-cost one-to-one assignment of min(n,m) pairs. +infinity marks a
// forbidden pair; rows/columns whose every pair is forbidden stay unassigned.
Assignment hungarian(const Eigen::MatrixXd& cost);

// A track: one id plus a frame-indexed box sequence (frames may be sparse).
struct Track {
  int id = 0;
  std::map<int, BBox> boxes;
};
using TrackSet = std::vector<Track>;

struct MetricReport {
  double mota = 0.0;
  double motp = 0.0;  // mean IoU of matched pairs
  double idf1 = 0.0;
  long long ids = 0, fp = 0, fn = 0;
  double ids_pct = 0.0, fp_pct = 0.0, fn_pct = 0.0;  // percent of total GT boxes
  int mt = 0, ml = 0;
  long long gt_total = 0;
  long long hyp_total = 0;
  long long matches = 0;
  double idtp = 0.0;  // identity true positives behind idf1
  int n_gt_tracks = 0, n_hyp_tracks = 0;
};

// CLEAR protocol: per frame, matches from the previous frame are kept while
// still above the IoU threshold, the remainder is matched by the Hungarian
// algorithm on 1-IoU cost (pairs under the threshold forbidden). A matched
// ground-truth track whose hypothesis id differs from its last matched one
// counts an identity switch. MT/ML use 80%/20% coverage. IDF1 comes from a
// global bipartite matching of gt-id x hyp-id frame-overlap counts:
//   IDF1 = 2 * IDTP / (#gt boxes + #hyp boxes).
// Throws DataError when the ground truth is empty (MOTA undefined).
MetricReport evaluate(const TrackSet& gt, const TrackSet& hyp, double iou_threshold = 0.5);

// Sums counts across sequences and recomputes the ratio metrics from the
// pooled counts.
MetricReport aggregate(const std::vector<MetricReport>& reports);

}  // namespace dvu::metrics
