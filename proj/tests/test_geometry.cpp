#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "nsbm/common.hpp"
#include "nsbm/geometry.hpp"
#include "nsbm/rng.hpp"

namespace {

using nsbm::OrientedBox;
using nsbm::Rng;
using nsbm::Vec2;

// --- Independent oracle: convex quad intersection via corner containment +
// segment crossing, and minimum distance via dense perimeter sampling. ---

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool point_in_quad(const std::array<Vec2, 4>& q, const Vec2& p) {
  // Corners are in consistent (counterclockwise or clockwise) order.
  double sign = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double c = cross(q[i], q[(i + 1) % 4], p);
    if (c == 0.0) continue;
    if (sign == 0.0) sign = c;
    if (sign * c < 0.0) return false;
  }
  return true;
}

bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

bool quads_overlap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  for (const Vec2& p : a) {
    if (point_in_quad(b, p)) return true;
  }
  for (const Vec2& p : b) {
    if (point_in_quad(a, p)) return true;
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (segments_cross(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) return true;
    }
  }
  return false;
}

double sampled_gap(const OrientedBox& a, const OrientedBox& b, int per_edge) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  auto sample = [per_edge](const std::array<Vec2, 4>& c, int k) {
    const int edge = k / per_edge;
    const double t = static_cast<double>(k % per_edge) / per_edge;
    const Vec2& p = c[edge];
    const Vec2& q = c[(edge + 1) % 4];
    return Vec2{p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
  };
  double best = nsbm::kInf;
  for (int i = 0; i < 4 * per_edge; ++i) {
    const Vec2 p = sample(ca, i);
    for (int j = 0; j < 4 * per_edge; ++j) {
      const Vec2 q = sample(cb, j);
      best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
    }
  }
  return best;
}

OrientedBox random_box(Rng& rng) {
  return {rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0),
          rng.uniform(-std::numbers::pi, std::numbers::pi), rng.uniform(1.0, 6.0),
          rng.uniform(0.8, 2.5)};
}

TEST(OrientedBoxTest, CornersOfAxisAlignedBox) {
  const OrientedBox b{10.0, 2.0, 0.0, 4.0, 2.0};
  const auto c = b.corners();
  double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
  for (const Vec2& p : c) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  EXPECT_DOUBLE_EQ(min_x, 8.0);
  EXPECT_DOUBLE_EQ(max_x, 12.0);
  EXPECT_DOUBLE_EQ(min_y, 1.0);
  EXPECT_DOUBLE_EQ(max_y, 3.0);
}

TEST(OrientedBoxTest, AxisAlignedGapIsExact) {
  const OrientedBox a{0.0, 0.0, 0.0, 4.0, 2.0};
  const OrientedBox b{10.0, 0.0, 0.0, 4.0, 2.0};    // 10 - 2 - 2 = 6 apart
  const OrientedBox c{0.0, 5.0, 0.0, 4.0, 2.0};     // 5 - 1 - 1 = 3 above
  const OrientedBox d{10.0, 5.0, 0.0, 4.0, 2.0};    // diagonal: hypot(6, 3)
  EXPECT_FALSE(nsbm::boxes_overlap(a, b));
  EXPECT_DOUBLE_EQ(nsbm::box_gap(a, b), 6.0);
  EXPECT_DOUBLE_EQ(nsbm::box_gap(a, c), 3.0);
  EXPECT_NEAR(nsbm::box_gap(a, d), std::hypot(6.0, 3.0), 1e-12);
}

TEST(OrientedBoxTest, TouchingCountsAsOverlap) {
  const OrientedBox a{0.0, 0.0, 0.0, 4.0, 2.0};
  const OrientedBox touching{4.0, 0.0, 0.0, 4.0, 2.0};  // bumper to bumper
  const OrientedBox separated{4.0 + 1e-9, 0.0, 0.0, 4.0, 2.0};
  const OrientedBox corner_touch{4.0, 2.0, 0.0, 4.0, 2.0};
  EXPECT_TRUE(nsbm::boxes_overlap(a, touching));
  EXPECT_DOUBLE_EQ(nsbm::box_gap(a, touching), 0.0);
  EXPECT_FALSE(nsbm::boxes_overlap(a, separated));
  EXPECT_TRUE(nsbm::boxes_overlap(a, corner_touch));
}

TEST(OrientedBoxTest, RotatedOverlapKnownCase) {
  // Unit square at the origin vs an identical square rotated 45 degrees and
  // shifted; overlaps until the shift exceeds (1 + sqrt(2)) / 2.
  const OrientedBox a{0.0, 0.0, 0.0, 1.0, 1.0};
  const double critical = 0.5 + std::numbers::sqrt2 / 2.0;
  const OrientedBox in{critical - 0.01, 0.0, std::numbers::pi / 4, 1.0, 1.0};
  const OrientedBox out{critical + 0.01, 0.0, std::numbers::pi / 4, 1.0, 1.0};
  EXPECT_TRUE(nsbm::boxes_overlap(a, in));
  EXPECT_FALSE(nsbm::boxes_overlap(a, out));
  EXPECT_NEAR(nsbm::box_gap(a, out), 0.01, 1e-12);
}

TEST(OrientedBoxTest, OverlapMatchesQuadIntersectionOracle) {
  Rng rng(2024);
  int overlaps = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const OrientedBox a = random_box(rng);
    const OrientedBox b = random_box(rng);
    const bool expect = quads_overlap(a.corners(), b.corners());
    // The oracle's strict predicates and the SAT's inclusive ones only differ
    // on exact tangency, which random draws do not hit.
    EXPECT_EQ(nsbm::boxes_overlap(a, b), expect) << "trial " << trial;
    overlaps += expect;
  }
  EXPECT_GT(overlaps, 40);
  EXPECT_LT(overlaps, 360);
}

TEST(OrientedBoxTest, GapMatchesPerimeterSamplingOracle) {
  Rng rng(77);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const OrientedBox a = random_box(rng);
    const OrientedBox b = random_box(rng);
    if (nsbm::boxes_overlap(a, b)) {
      EXPECT_DOUBLE_EQ(nsbm::box_gap(a, b), 0.0);
      continue;
    }
    const double gap = nsbm::box_gap(a, b);
    const double approx = sampled_gap(a, b, 60);
    // Sampling overestimates by at most about one sample spacing.
    const double spacing = 2.0 * (6.0 + 2.5) / 60.0;
    EXPECT_LE(gap, approx + 1e-12) << "trial " << trial;
    EXPECT_GE(gap, approx - spacing) << "trial " << trial;
    ++checked;
  }
  EXPECT_GT(checked, 30);
}

}  // namespace
