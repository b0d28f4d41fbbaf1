#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nsbm/common.hpp"
#include "nsbm/gev.hpp"
#include "nsbm/trajectory.hpp"

namespace nsbm {

// Probability-plot points for calibration assessment: the probability integral
// transform u_i = F(z_i; theta_i) of each event under its own predicted
// distribution, sorted and paired with plotting positions i/(n+1).
// Returns (plotting position, sorted PIT) pairs.
inline std::vector<std::pair<double, double>> pp_points(
    const std::vector<double>& z, const std::vector<GevParams>& params) {
  if (z.size() != params.size() || z.empty()) {
    throw std::invalid_argument("pp_points needs matching non-empty inputs");
  }
  std::vector<double> pit(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) pit[i] = gev_cdf(params[i], z[i]);
  std::sort(pit.begin(), pit.end());
  std::vector<std::pair<double, double>> out(pit.size());
  for (std::size_t i = 0; i < pit.size(); ++i) {
    out[i] = {static_cast<double>(i + 1) / static_cast<double>(pit.size() + 1), pit[i]};
  }
  return out;
}

// Accuracy of prediction at lead time T: per sample, the fraction of the
// T/tau + 1 timesteps (inclusive endpoints) whose M-value clears the warning
// threshold; averaged over samples.
inline double accuracy_of_prediction(
    const std::map<std::string, std::vector<double>>& m_series, double m_star,
    double T) {
  if (m_series.empty()) throw std::invalid_argument("AP needs at least one sample");
  const auto expected = static_cast<std::size_t>(to_ds(T)) + 1;
  double acc = 0.0;
  for (const auto& [sid, series] : m_series) {
    if (series.size() != expected) {
      throw std::invalid_argument("sample '" + sid + "' M-series has " +
                                  std::to_string(series.size()) + " steps, expected " +
                                  std::to_string(expected));
    }
    std::size_t warn = 0;
    for (const double m : series) warn += m >= m_star;
    acc += static_cast<double>(warn) / static_cast<double>(expected);
  }
  return acc / static_cast<double>(m_series.size());
}

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // swept from strictest to loosest threshold
  double auc = 0.0;
};

// ROC by threshold sweep over the pooled unique scores (higher score = more
// dangerous), AUC by trapezoid. With ties grouped this equals the
// Mann-Whitney statistic with half credit for ties.
inline RocResult roc_auc(const std::vector<double>& case_scores,
                         const std::vector<double>& control_scores) {
  if (case_scores.empty() || control_scores.empty()) {
    throw std::invalid_argument("ROC needs non-empty case and control scores");
  }
  std::vector<double> thresholds;
  thresholds.reserve(case_scores.size() + control_scores.size());
  thresholds.insert(thresholds.end(), case_scores.begin(), case_scores.end());
  thresholds.insert(thresholds.end(), control_scores.begin(), control_scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double n1 = static_cast<double>(case_scores.size());
  const double n0 = static_cast<double>(control_scores.size());
  RocResult out;
  out.points.push_back({0.0, 0.0});
  double auc = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  for (const double thr : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (const double s : case_scores) tp += s >= thr;
    for (const double s : control_scores) fp += s >= thr;
    const double tpr = static_cast<double>(tp) / n1;
    const double fpr = static_cast<double>(fp) / n0;
    out.points.push_back({fpr, tpr});
    auc += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  if (prev_fpr < 1.0 || prev_tpr < 1.0) {
    out.points.push_back({1.0, 1.0});
    auc += (1.0 - prev_fpr) * (1.0 + prev_tpr) * 0.5;
  }
  out.auc = auc;
  return out;
}

// Surrogate safety measures for a subject following a same-lane lead vehicle.
// gap is the bumper-to-bumper spacing along x; it must be positive (vehicles
// already overlapping have no meaningful following distance).
// TTC = gap/dv for closing speed dv > 0, else +inf.
// MTTC is the smallest positive root of gap = dv*t + 0.5*da*t^2 (reduces to
// TTC when da = 0), +inf when no positive root exists.
// DRAC = dv^2 / (2*gap) for dv > 0, else 0.
// Flags use strict inequalities: TTC < 1.5 s, MTTC < 1.5 s, DRAC > 3.5 m/s^2.
struct SsmScores {
  double ttc = kInf;
  double mttc = kInf;
  double drac = 0.0;
  bool ttc_flag = false;
  bool mttc_flag = false;
  bool drac_flag = false;
};

inline constexpr double kTtcThreshold = 1.5;    // s
inline constexpr double kMttcThreshold = 1.5;   // s
inline constexpr double kDracThreshold = 3.5;   // m/s^2

inline SsmScores ssm_scores(const VehicleState& subject, const VehicleState& lead) {
  const double gap =
      (lead.x - 0.5 * lead.length) - (subject.x + 0.5 * subject.length);
  if (!(gap > 0.0)) {
    throw std::invalid_argument("SSM gap must be positive (vehicles overlap)");
  }
  const double dv = subject.speed - lead.speed;
  const double da = subject.accel - lead.accel;
  SsmScores out;
  if (dv > 0.0) {
    out.ttc = gap / dv;
    out.drac = dv * dv / (2.0 * gap);
  }
  if (std::fabs(da) < 1e-12) {
    out.mttc = out.ttc;
  } else {
    const double disc = dv * dv + 2.0 * da * gap;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      double best = kInf;
      for (const double root : {(-dv + sq) / da, (-dv - sq) / da}) {
        if (root > 0.0) best = std::min(best, root);
      }
      out.mttc = best;
    }
  }
  out.ttc_flag = out.ttc < kTtcThreshold;
  out.mttc_flag = out.mttc < kMttcThreshold;
  out.drac_flag = out.drac > kDracThreshold;
  return out;
}

}  // namespace nsbm
