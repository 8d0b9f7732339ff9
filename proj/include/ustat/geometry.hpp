#pragma once

#include <cmath>

#include "ustat/law.hpp"

namespace ustat {

inline constexpr double kOrientationTol = 1e-12;

/// cross(a - theta, b - theta).
inline double cross_about(const Point& theta, const Point& a, const Point& b) noexcept {
  return (a[0] - theta[0]) * (b[1] - theta[1]) - (a[1] - theta[1]) * (b[0] - theta[0]);
}

/// Orientation of vectors a, b given their squared lengths:
/// |cross| <= tol |a||b| (compared squared) counts as collinear.
inline int orientation_rel(double ax, double ay, double a2, double bx, double by, double b2) noexcept {
  const double c = ax * by - ay * bx;
  const double scale2 = a2 * b2;
  if (scale2 == 0.0 || c * c <= kOrientationTol * kOrientationTol * scale2) return 0;
  return c > 0.0 ? 1 : -1;
}

/// Sign of cross_about, or 0 when it is within the relative tolerance
/// (theta collinear with a and b, or coinciding with one of them).
inline int orientation(const Point& theta, const Point& a, const Point& b) noexcept {
  const double ax = a[0] - theta[0];
  const double ay = a[1] - theta[1];
  const double bx = b[0] - theta[0];
  const double by = b[1] - theta[1];
  return orientation_rel(ax, ay, ax * ax + ay * ay, bx, by, bx * bx + by * by);
}

/// theta strictly inside the open triangle (a, b, c). Ambiguous
/// orientations count as outside.
inline bool in_open_triangle(const Point& theta, const Point& a, const Point& b, const Point& c) noexcept {
  const int s1 = orientation(theta, a, b);
  const int s2 = orientation(theta, b, c);
  const int s3 = orientation(theta, c, a);
  return s1 != 0 && s1 == s2 && s2 == s3;
}

}  // namespace ustat
