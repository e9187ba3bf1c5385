// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

namespace pairsel {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

struct ConvexHull {
  std::vector<Point2> vertices;  // counter-clockwise, no repeated first vertex
  double area = 0.0;
};

/// Andrew's monotone chain. Fewer than three non-collinear points give a
/// hull of area 0; collinear boundary points are dropped.
ConvexHull convex_hull(std::vector<Point2> points);

/// Shoelace area of a simple polygon (positive for counter-clockwise order).
double polygon_area(std::span<const Point2> ring);

}  // namespace pairsel
