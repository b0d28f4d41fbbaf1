#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "nsbm/risk.hpp"
#include "nsbm/rng.hpp"

namespace {

using nsbm::GevParams;
using nsbm::Rng;

GevParams random_params(Rng& rng) {
  GevParams p;
  p.xi = rng.uniform(-0.4, 0.4);
  p.sigma = rng.uniform(0.1, 1.5);
  p.mu = rng.uniform(-3.0, -0.2);
  return p;
}

TEST(RiskValue, IdenticalDistributionsScoreOne) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const GevParams p = random_params(rng);
    const double z = rng.uniform(-2.5, 0.0);
    for (const int grid : {2, 50, 200}) {
      EXPECT_NEAR(nsbm::risk_value(z, p, p, grid, -3.0), 1.0, 1e-9);
    }
  }
}

TEST(RiskValue, WellSeparatedDistributionsApproachTwo) {
  // Crash extremes concentrated near zero, non-crash extremes far away:
  // a threshold between them is nearly always exceeded by crash samples and
  // nearly never by non-crash samples.
  const GevParams crash{0.0, 0.05, -0.2};
  const GevParams noncrash{0.0, 0.05, -2.5};
  EXPECT_GE(nsbm::risk_value(-0.2, crash, noncrash, 200, -3.0), 1.99);
}

TEST(RiskValue, StaysInUnitRange) {
  Rng rng(42);
  for (int trial = 0; trial < 10000; ++trial) {
    const GevParams crash = random_params(rng);
    const GevParams noncrash = random_params(rng);
    const double z = rng.uniform(-4.0, 0.0);
    const double m = nsbm::risk_value(z, crash, noncrash, 50, -3.0);
    ASSERT_GE(m, 0.0);
    ASSERT_LE(m, 2.0);
  }
}

TEST(RiskValue, CoarseGridTracksFineGridOracle) {
  Rng rng(2023);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    // Scales at 0.25+ keep the metric's curvature within what a 200-point
    // grid resolves to 1e-3.
    GevParams crash = random_params(rng);
    GevParams noncrash = random_params(rng);
    crash.sigma = std::max(crash.sigma, 0.25);
    noncrash.sigma = std::max(noncrash.sigma, 0.25);
    const double z = rng.uniform(-3.0, 0.0);
    const double coarse = nsbm::risk_value(z, crash, noncrash, 200, -3.0);
    const double fine = nsbm::risk_value(z, crash, noncrash, 100000, -3.0);
    worst = std::max(worst, std::fabs(coarse - fine));
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(RiskValue, EdgeCases) {
  const GevParams a{0.1, 0.5, -1.0};
  const GevParams b{-0.1, 0.7, -2.0};
  EXPECT_DOUBLE_EQ(nsbm::risk_value(-nsbm::kInf, a, b), 1.0);
  EXPECT_THROW(nsbm::risk_value(0.5, a, b), std::invalid_argument);
  EXPECT_THROW(nsbm::risk_value(-1.0, a, b, 1), std::invalid_argument);
  // Below the floor the grid degenerates to the single point z.
  const double z = -5.0;
  const double m = nsbm::risk_value(z, a, b, 200, -3.0);
  const double single =
      (1.0 - nsbm::gev_cdf(a, z)) + nsbm::gev_cdf(b, z);
  EXPECT_NEAR(m, single, 1e-12);
}

TEST(MStarGrid, EndpointsAndStepAreExact) {
  const auto grid = nsbm::make_mstar_grid(0.05, 2.0);
  ASSERT_EQ(grid.size(), 41u);
  EXPECT_DOUBLE_EQ(grid.front(), 0.0);
  EXPECT_DOUBLE_EQ(grid.back(), 2.0);
  EXPECT_DOUBLE_EQ(grid[21], 2.0 * 21.0 / 40.0);
}

TEST(CalibrateThreshold, HandComputedCase) {
  // Crash Ms {1.8, 1.9}, non-crash {0.5, 1.2}. V(m) = Recall(m) + 1 - FAR(m):
  // any m in (1.2, 1.8] gives V = 2; the first grid point above 1.2 is 1.25.
  const auto grid = nsbm::make_mstar_grid(0.05, 2.0);
  const auto cal = nsbm::calibrate_threshold({1.8, 1.9}, {0.5, 1.2}, grid, 1.0);
  EXPECT_DOUBLE_EQ(cal.m_star, 1.25);
  EXPECT_DOUBLE_EQ(cal.lead_time, 1.0);
  ASSERT_EQ(cal.v_curve.size(), grid.size());
  EXPECT_DOUBLE_EQ(cal.v_curve[0].v, 2.0 - 1.0);   // m=0: recall 1, far 1
  EXPECT_DOUBLE_EQ(cal.v_curve[25].v, 2.0);        // m=1.25
  EXPECT_DOUBLE_EQ(cal.v_curve[40].v, 1.0);        // m=2: recall 0, far 0
}

TEST(CalibrateThreshold, TieBreaksToSmallestThreshold) {
  // All crash Ms above all grid points, no non-crash alarms anywhere: V = 2
  // for every m, so the smallest grid value must win.
  const auto grid = nsbm::make_mstar_grid(0.05, 2.0);
  const auto cal = nsbm::calibrate_threshold({2.5, 2.6}, {-1.0}, grid, 0.4);
  EXPECT_DOUBLE_EQ(cal.m_star, 0.0);
  EXPECT_THROW(nsbm::calibrate_threshold({}, {1.0}, grid, 1.0),
               std::invalid_argument);
}

TEST(Predict, WiresModelsMetricAndThreshold) {
  nsbm::ModelDims dims;
  dims.hidden = 6;
  dims.d_g = 3;
  dims.d_l = 2;
  dims.d_score = 2;
  nsbm::TrainedModel crash_model, noncrash_model;
  crash_model.params = nsbm::init_params(dims, 1);
  crash_model.scenario = "crash";
  noncrash_model.params = nsbm::init_params(dims, 2);
  noncrash_model.scenario = "non_crash";

  nsbm::SceneGraph g;
  g.sample_id = "s";
  g.t_ds = -4;
  g.present[0] = true;
  g.nodes[0] = {24.0, -0.5, 0.0, 2.0, 180.0, 3.5};
  for (int e = 0; e < nsbm::kNumEdges; ++e) {
    g.edges[e].a = nsbm::kEdgeEndpoints[e][0];
    g.edges[e].b = nsbm::kEdgeEndpoints[e][1];
  }

  const double z = -0.8;
  const auto r = nsbm::predict(g, crash_model, noncrash_model, 1.2, z, 200, -3.0);
  EXPECT_EQ(r.t_ds, -4);
  EXPECT_DOUBLE_EQ(r.current_z, z);
  const GevParams pc = nsbm::forward_params(g, crash_model.params);
  const GevParams pn = nsbm::forward_params(g, noncrash_model.params);
  EXPECT_EQ(r.crash_params.mu, pc.mu);
  EXPECT_EQ(r.noncrash_params.mu, pn.mu);
  EXPECT_DOUBLE_EQ(r.m, nsbm::risk_value(z, pc, pn, 200, -3.0));
  EXPECT_EQ(r.warn, r.m >= 1.2);

  EXPECT_THROW(nsbm::predict(g, noncrash_model, crash_model, 1.2, z),
               std::invalid_argument);
}

TEST(ThresholdCalibrationJson, RoundTrips) {
  const auto grid = nsbm::make_mstar_grid(0.05, 2.0);
  const auto cal = nsbm::calibrate_threshold({1.6, 1.7, 0.9}, {0.4, 1.1}, grid, 2.0);
  const nlohmann::json j = cal;
  const auto back = j.get<nsbm::ThresholdCalibration>();
  EXPECT_EQ(back.m_star, cal.m_star);
  EXPECT_EQ(back.lead_time, cal.lead_time);
  ASSERT_EQ(back.v_curve.size(), cal.v_curve.size());
  for (std::size_t i = 0; i < cal.v_curve.size(); ++i) {
    EXPECT_EQ(back.v_curve[i].m, cal.v_curve[i].m);
    EXPECT_EQ(back.v_curve[i].v, cal.v_curve[i].v);
  }
}

}  // namespace
