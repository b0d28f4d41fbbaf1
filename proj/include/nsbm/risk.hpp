#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "nsbm/gev.hpp"
#include "nsbm/model.hpp"
#include "nsbm/train.hpp"

namespace nsbm {

// Divergence metric between the crash- and non-crash-conditioned extreme value
// distributions, swept over candidate danger thresholds i:
//   Metric(i) = [1 - F_crash(i)] + F_noncrash(i)
// evaluated on `grid_n` evenly spaced thresholds from the scale floor up to
// the current danger value, M = max over the grid, in [0, 2]. A frame with no
// interaction (current_z = -inf) sits below every threshold: M = 1 (the
// Metric's lower-tail limit). If current_z is below the floor the sweep
// degenerates to the single point current_z.
inline double risk_value(double current_z, const GevParams& crash,
                         const GevParams& noncrash, int grid_n = 200,
                         double floor = -1.0) {
  check_params(crash);
  check_params(noncrash);
  if (grid_n < 2) throw std::invalid_argument("risk grid needs at least 2 points");
  if (!(current_z <= 0.0)) throw std::invalid_argument("danger value must be <= 0");
  if (current_z == -kInf) return 1.0;
  const double lo = std::min(floor, current_z);
  const double hi = current_z;
  double best = 0.0;
  for (int k = 0; k < grid_n; ++k) {
    const double i =
        lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid_n - 1);
    const double metric = (1.0 - gev_cdf(crash, i)) + gev_cdf(noncrash, i);
    best = std::max(best, metric);
  }
  return best;
}

struct VCurvePoint {
  double m = 0.0;
  double v = 0.0;
};

struct ThresholdCalibration {
  double lead_time = 0.0;  // seconds
  double m_star = 0.0;
  std::vector<VCurvePoint> v_curve;
};

inline std::vector<double> make_mstar_grid(double step = 0.05, double max_m = 2.0) {
  // Grid points as k/denominator so the endpoints are exact.
  const int n = static_cast<int>(std::llround(max_m / step));
  std::vector<double> grid(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    grid[static_cast<std::size_t>(k)] =
        max_m * static_cast<double>(k) / static_cast<double>(n);
  }
  return grid;
}

// Pick the warning threshold maximizing V = Recall + (1 - FAR) over the grid,
// where Recall is the fraction of crash M-values >= m and FAR the fraction of
// non-crash M-values >= m. Ties resolve to the smallest threshold.
inline ThresholdCalibration calibrate_threshold(const std::vector<double>& crash_ms,
                                                const std::vector<double>& noncrash_ms,
                                                const std::vector<double>& grid,
                                                double lead_time) {
  if (crash_ms.empty() || noncrash_ms.empty()) {
    throw std::invalid_argument("calibration needs non-empty M-value lists");
  }
  if (grid.empty()) throw std::invalid_argument("calibration grid is empty");
  ThresholdCalibration cal;
  cal.lead_time = lead_time;
  double best_v = -kInf;
  for (const double m : grid) {
    std::size_t hits = 0;
    for (const double v : crash_ms) hits += v >= m;
    std::size_t false_alarms = 0;
    for (const double v : noncrash_ms) false_alarms += v >= m;
    const double recall = static_cast<double>(hits) / crash_ms.size();
    const double far = static_cast<double>(false_alarms) / noncrash_ms.size();
    const double v = recall + 1.0 - far;
    cal.v_curve.push_back({m, v});
    if (v > best_v) {
      best_v = v;
      cal.m_star = m;
    }
  }
  return cal;
}

struct RiskAssessment {
  std::int64_t t_ds = 0;
  double current_z = 0.0;
  double m = 0.0;
  bool warn = false;
  GevParams crash_params;
  GevParams noncrash_params;
};

// Score one frame: run both scenario models on its scene graph, sweep the
// divergence metric up to the frame's danger value, warn when M >= m_star.
inline RiskAssessment predict(const SceneGraph& graph, const TrainedModel& crash_model,
                              const TrainedModel& noncrash_model, double m_star,
                              double current_z, int grid_n = 200, double floor = -1.0) {
  if (crash_model.scenario != "crash" || noncrash_model.scenario != "non_crash") {
    throw std::invalid_argument("model scenario tags do not match their slots");
  }
  RiskAssessment out;
  out.t_ds = graph.t_ds;
  out.current_z = current_z;
  out.crash_params = forward_params(graph, crash_model.params);
  out.noncrash_params = forward_params(graph, noncrash_model.params);
  out.m = risk_value(current_z, out.crash_params, out.noncrash_params, grid_n, floor);
  out.warn = out.m >= m_star;
  return out;
}

inline void to_json(nlohmann::json& j, const ThresholdCalibration& c) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : c.v_curve) curve.push_back({{"m", p.m}, {"v", p.v}});
  j = nlohmann::json{
      {"lead_time", c.lead_time}, {"m_star", c.m_star}, {"v_curve", curve}};
}

inline void from_json(const nlohmann::json& j, ThresholdCalibration& c) {
  j.at("lead_time").get_to(c.lead_time);
  j.at("m_star").get_to(c.m_star);
  c.v_curve.clear();
  for (const auto& p : j.at("v_curve")) {
    c.v_curve.push_back({p.at("m").get<double>(), p.at("v").get<double>()});
  }
}

}  // namespace nsbm
