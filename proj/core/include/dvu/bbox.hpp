#pragma once

#include <Eigen/Core>

namespace dvu {

// Axis-aligned bounding box in normalized, y-up coordinates:
// (l, t, r, b) with r > l and t > b. Width = r - l, height = t - b.
struct BBox {
  double l = 0.0;
  double t = 0.0;
  double r = 0.0;
  double b = 0.0;

  double width() const { return r - l; }
  double height() const { return t - b; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (l + r); }
  double cy() const { return 0.5 * (t + b); }
  bool valid() const { return r > l && t > b; }

  Eigen::Vector4d vec() const { return {l, t, r, b}; }
  static BBox from_vec(const Eigen::Vector4d& v) { return {v[0], v[1], v[2], v[3]}; }
};

}  // namespace dvu
