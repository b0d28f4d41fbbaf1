#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace nsbm {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

// Oriented rectangle: center, long-axis heading (radians), full length/width.
struct OrientedBox {
  double cx = 0.0, cy = 0.0;
  double heading = 0.0;
  double length = 0.0;
  double width = 0.0;

  std::array<Vec2, 4> corners() const {
    const double c = std::cos(heading), s = std::sin(heading);
    const double hl = 0.5 * length, hw = 0.5 * width;
    // Counterclockwise from front-left in body frame.
    const std::array<Vec2, 4> body{Vec2{hl, hw}, Vec2{-hl, hw}, Vec2{-hl, -hw},
                                   Vec2{hl, -hw}};
    std::array<Vec2, 4> out{};
    for (int i = 0; i < 4; ++i) {
      out[i] = {cx + c * body[i].x - s * body[i].y,
                cy + s * body[i].x + c * body[i].y};
    }
    return out;
  }
};

namespace detail {

// Do projections of the two corner sets onto `axis` overlap?
inline bool axis_separates(Vec2 axis, const std::array<Vec2, 4>& a,
                           const std::array<Vec2, 4>& b) {
  double amin = dot(axis, a[0]), amax = amin;
  for (int i = 1; i < 4; ++i) {
    const double p = dot(axis, a[i]);
    amin = std::min(amin, p);
    amax = std::max(amax, p);
  }
  double bmin = dot(axis, b[0]), bmax = bmin;
  for (int i = 1; i < 4; ++i) {
    const double p = dot(axis, b[i]);
    bmin = std::min(bmin, p);
    bmax = std::max(bmax, p);
  }
  return amax < bmin || bmax < amin;
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 q{a.x + t * ab.x, a.y + t * ab.y};
  return norm(p - q);
}

inline double segment_segment_distance(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1) {
  double d = point_segment_distance(a0, b0, b1);
  d = std::min(d, point_segment_distance(a1, b0, b1));
  d = std::min(d, point_segment_distance(b0, a0, a1));
  d = std::min(d, point_segment_distance(b1, a0, a1));
  return d;
}

}  // namespace detail

// Overlap test by separating axes (exact for convex shapes; touching counts as overlap).
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes{
      Vec2{std::cos(a.heading), std::sin(a.heading)},
      Vec2{-std::sin(a.heading), std::cos(a.heading)},
      Vec2{std::cos(b.heading), std::sin(b.heading)},
      Vec2{-std::sin(b.heading), std::cos(b.heading)}};
  for (const Vec2 axis : axes) {
    if (detail::axis_separates(axis, ca, cb)) return false;
  }
  return true;
}

// Minimal Euclidean gap between two oriented rectangles; exactly 0 when they
// overlap or touch. For disjoint convex polygons the minimum is attained on a
// vertex-edge pair, so scanning all edge pairs is exact.
inline double box_gap(const OrientedBox& a, const OrientedBox& b) {
  if (boxes_overlap(a, b)) return 0.0;
  const auto ca = a.corners();
  const auto cb = b.corners();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    const Vec2 a0 = ca[i], a1 = ca[(i + 1) % 4];
    for (int j = 0; j < 4; ++j) {
      const Vec2 b0 = cb[j], b1 = cb[(j + 1) % 4];
      best = std::min(best, detail::segment_segment_distance(a0, a1, b0, b1));
    }
  }
  return best;
}

}  // namespace nsbm
