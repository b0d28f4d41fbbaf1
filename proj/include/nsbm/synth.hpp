#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nsbm/common.hpp"
#include "nsbm/rng.hpp"
#include "nsbm/trajectory.hpp"

namespace nsbm {

// Seeded scenario generator: car-following traffic on a straight multi-lane
// segment with two crash archetypes (rear_end: a lead brakes and the follower
// fails to react; sideswipe: an adjacent vehicle changes lanes into a gap that
// is too small) and non-crash windows drawn from the same traffic patterns.
//
// Label contract: a crash sample ends at the first bounding-box overlap,
// re-indexed to t = 0, with at least 6 s of history; a non-crash sample keeps
// MRD > 1 m throughout. Non-crash samples still contain close interactions
// (side-by-side passes at ~1.5-1.8 m lateral gaps, longitudinal approach dips
// bottoming out between 2.6 and 2.95 m), so the non-crash extreme stream is
// informative rather than empty.
struct SynthConfig {
  int n_crash = 40;
  int n_noncrash = 200;
  double rear_end_fraction = 0.5;
  std::uint64_t seed = 0;
  int lanes = 3;
  double segment_length = 400.0;
  double v_min = 12.0;  // m/s
  double v_max = 30.0;
  double noncrash_duration = 8.0;  // s
  double crash_history = 6.0;      // s kept before the impact
};

namespace detail {

inline double lane_center(int lane) { return 3.5 * (lane - 1); }

struct VehicleTrack {
  int id = 0;
  double length = 4.5;
  double width = 1.8;
  // Positions on the tau grid; two extra samples past the window so speed and
  // acceleration come from forward differences (which makes the kinematic
  // consistency bound exact by construction).
  std::vector<double> xs, ys;
};

inline TrajectorySample assemble(const std::string& sample_id, Label label,
                                 int subject_id, std::int64_t t0_ds, int n_frames,
                                 const std::vector<VehicleTrack>& tracks, int lanes) {
  TrajectorySample s;
  s.sample_id = sample_id;
  s.label = label;
  s.subject_id = subject_id;
  for (int i = 0; i < n_frames; ++i) {
    const std::int64_t t_ds = t0_ds + i;
    Frame& frame = s.frames[t_ds];
    for (const VehicleTrack& tr : tracks) {
      const double vx = (tr.xs[i + 1] - tr.xs[i]) / kTau;
      const double vx_next = (tr.xs[i + 2] - tr.xs[i + 1]) / kTau;
      const double vy = (tr.ys[i + 1] - tr.ys[i]) / kTau;
      VehicleState v;
      v.id = tr.id;
      v.t_ds = t_ds;
      v.x = tr.xs[i];
      v.y = tr.ys[i];
      v.speed = vx;
      v.accel = (vx_next - vx) / kTau;
      v.heading = (vx == 0.0 && vy == 0.0) ? 0.0 : std::atan2(vy, vx);
      v.lane = std::clamp(1 + static_cast<int>(std::llround(tr.ys[i] / 3.5)), 1, lanes);
      v.length = tr.length;
      v.width = tr.width;
      frame.push_back(v);
    }
  }
  return s;
}

inline VehicleTrack constant_track(int id, Rng& rng, double x0, double v, int lane,
                                   int n_points) {
  VehicleTrack tr;
  tr.id = id;
  tr.length = rng.uniform(4.2, 4.9);
  tr.width = rng.uniform(1.7, 2.0);
  tr.xs.resize(n_points);
  tr.ys.assign(n_points, lane_center(lane));
  for (int i = 0; i < n_points; ++i) tr.xs[i] = x0 + v * kTau * i;
  return tr;
}

inline std::vector<int> adjacent_lanes(int lane, int lanes) {
  std::vector<int> out;
  if (lane - 1 >= 1) out.push_back(lane - 1);
  if (lane + 1 <= lanes) out.push_back(lane + 1);
  return out;
}

// Subject MRD over the whole sample via the neighbor roles, for validation.
inline double min_mrd(const TrajectorySample& s) {
  double best = kInf;
  for (const auto& [t_ds, frame] : s.frames) {
    const NeighborSet n = identify_neighbors(frame, s.subject_id);
    best = std::min(best, compute_mrd(s.subject_at(t_ds), n));
  }
  return best;
}

inline double mrd_at(const TrajectorySample& s, std::int64_t t_ds) {
  const NeighborSet n = identify_neighbors(s.frame(t_ds), s.subject_id);
  return compute_mrd(s.subject_at(t_ds), n);
}

// Rear-end: the subject follows a lead that brakes away `c` m/s of speed; the
// subject never reacts and closes the gap linearly at c until the boxes touch
// exactly at the final frame.
inline TrajectorySample make_rear_end(const std::string& sid, Rng rng,
                                      const SynthConfig& cfg, int n_hist) {
  const int n_frames = n_hist + 1;
  const int n_points = n_frames + 2;
  const double t0 = -0.1 * n_hist;
  const bool fast = rng.uniform01() < 0.5;
  const double c = fast ? rng.uniform(4.5, 7.0) : rng.uniform(1.2, 2.2);
  const double v0 = rng.uniform(std::max(cfg.v_min, c + 6.0), cfg.v_max);
  const double t_br = std::max(1.0, c / 5.5);
  const double g0 = std::min(4.5 + 2.0 * c, 5.0 * c - 0.5);
  const double t_b = -(0.5 * t_br + g0 / c);  // >= -5.3 by construction

  std::vector<VehicleTrack> tracks;
  const int subject_lane = 1 + static_cast<int>(rng.below(cfg.lanes));
  const double x_impact = rng.uniform(0.35, 0.6) * cfg.segment_length;

  VehicleTrack subject;
  subject.id = 1;
  subject.length = rng.uniform(4.2, 4.9);
  subject.width = rng.uniform(1.7, 2.0);
  subject.xs.resize(n_points);
  subject.ys.assign(n_points, lane_center(subject_lane));
  for (int i = 0; i < n_points; ++i) subject.xs[i] = x_impact + v0 * (t0 + kTau * i);

  VehicleTrack lead;
  lead.id = 2;
  lead.length = rng.uniform(4.2, 4.9);
  lead.width = rng.uniform(1.7, 2.0);
  lead.ys.assign(n_points, lane_center(subject_lane));
  lead.xs.resize(n_points);
  {
    const auto v_l = [&](double t) {
      return v0 - c * std::clamp((t - t_b) / t_br, 0.0, 1.0);
    };
    std::vector<double> raw(n_points);
    raw[0] = 0.0;
    for (int i = 1; i < n_points; ++i) {
      const double ta = t0 + kTau * (i - 1);
      const double tb = t0 + kTau * i;
      raw[i] = raw[i - 1] + 0.5 * kTau * (v_l(ta) + v_l(tb));
    }
    // Shift so the bumper gap is exactly zero at the impact frame.
    const double k = subject.xs[n_hist] + 0.5 * (subject.length + lead.length) -
                     raw[n_hist];
    for (int i = 0; i < n_points; ++i) lead.xs[i] = raw[i] + k;
  }
  tracks.push_back(subject);
  tracks.push_back(lead);

  int next_id = 3;
  tracks.push_back(constant_track(next_id++, rng,
                                  subject.xs[0] - rng.uniform(16.5, 24.5), v0,
                                  subject_lane, n_points));
  for (const int lane : adjacent_lanes(subject_lane, cfg.lanes)) {
    const double sign = rng.uniform01() < 0.5 ? 1.0 : -1.0;
    const double offset = sign * rng.uniform(15.0, 30.0);
    const double v = v0 * rng.uniform(0.98, 1.02);
    tracks.push_back(
        constant_track(next_id++, rng, subject.xs[0] + offset, v, lane, n_points));
  }
  return assemble(sid, Label::crash, 1, to_ds(t0), n_frames, tracks, cfg.lanes);
}

// Sideswipe: an adjacent vehicle slightly ahead of the subject drifts into the
// subject's lane on a smoothstep lateral profile until the boxes touch. The
// impact frame is found by simulation and re-indexed to t = 0.
inline TrajectorySample make_sideswipe(const std::string& sid, Rng rng,
                                       const SynthConfig& cfg, int n_hist) {
  const double t_cut = 5.2;
  const double t_lat = rng.uniform(4.5, 6.5);
  const int n_total = static_cast<int>(std::llround((t_cut + t_lat) / kTau)) + 3;
  const double v0 = rng.uniform(cfg.v_min, cfg.v_max);
  int subject_lane = 1 + static_cast<int>(rng.below(cfg.lanes));
  const auto adj = adjacent_lanes(subject_lane, cfg.lanes);
  const int cutter_lane = adj[rng.below(adj.size())];
  const double x0 = rng.uniform(0.15, 0.3) * cfg.segment_length;

  VehicleTrack subject;
  subject.id = 1;
  subject.length = rng.uniform(4.2, 4.9);
  subject.width = rng.uniform(1.7, 2.0);
  subject.xs.resize(n_total);
  subject.ys.assign(n_total, lane_center(subject_lane));
  for (int i = 0; i < n_total; ++i) subject.xs[i] = x0 + v0 * kTau * i;

  VehicleTrack cutter;
  cutter.id = 2;
  cutter.length = rng.uniform(4.2, 4.9);
  cutter.width = rng.uniform(1.7, 2.0);
  cutter.xs.resize(n_total);
  cutter.ys.resize(n_total);
  const double dx0 = rng.uniform(1.8, 3.2);
  const double y_from = lane_center(cutter_lane);
  const double y_to = lane_center(subject_lane);
  for (int i = 0; i < n_total; ++i) {
    const double t = kTau * i;
    cutter.xs[i] = subject.xs[i] + dx0;
    const double u = std::clamp((t - t_cut) / t_lat, 0.0, 1.0);
    const double smooth = u * u * (3.0 - 2.0 * u);
    cutter.ys[i] = y_from + (y_to - y_from) * smooth;
  }

  std::vector<VehicleTrack> tracks{subject, cutter};
  int next_id = 3;
  tracks.push_back(constant_track(next_id++, rng, x0 + rng.uniform(28.0, 42.0), v0,
                                  subject_lane, n_total));
  tracks.push_back(constant_track(next_id++, rng, x0 - rng.uniform(18.0, 30.0), v0,
                                  subject_lane, n_total));

  // First frame where the subject and cutter boxes touch.
  int impact = -1;
  for (int i = 0; i < n_total - 2; ++i) {
    OrientedBox a{subject.xs[i], subject.ys[i], 0.0, subject.length, subject.width};
    const double vyc = (cutter.ys[i + 1] - cutter.ys[i]) / kTau;
    const double vxc = (cutter.xs[i + 1] - cutter.xs[i]) / kTau;
    OrientedBox b{cutter.xs[i], cutter.ys[i], std::atan2(vyc, vxc), cutter.length,
                  cutter.width};
    if (boxes_overlap(a, b)) {
      impact = i;
      break;
    }
  }
  if (impact < n_hist) {
    throw numerical_error("sideswipe scenario lacks history before impact");
  }
  const int start = impact - n_hist;
  for (VehicleTrack& tr : tracks) {
    tr.xs.erase(tr.xs.begin(), tr.xs.begin() + start);
    tr.ys.erase(tr.ys.begin(), tr.ys.begin() + start);
  }
  return assemble(sid, Label::crash, 1, -n_hist, n_hist + 1, tracks, cfg.lanes);
}

// Non-crash window: steady car-following plus optional close-but-safe
// interactions (adjacent-lane passes that drift toward the lane boundary, a
// longitudinal approach dip that bottoms out shortly above the 1 m label
// threshold and recovers). Close calls are deliberately close: a ranking that
// looks only at instantaneous separation confuses them with genuine pre-crash
// frames, while the scene kinematics (same-lane closing speed versus an
// adjacent-lane passer or a recovering dip) still tell them apart.
inline TrajectorySample make_noncrash(const std::string& sid, Rng rng,
                                      const SynthConfig& cfg) {
  const int n_frames = static_cast<int>(std::llround(cfg.noncrash_duration / kTau)) + 1;
  const int n_points = n_frames + 2;
  const double v0 = rng.uniform(cfg.v_min, cfg.v_max);
  const int subject_lane = 1 + static_cast<int>(rng.below(cfg.lanes));
  const double x0 = rng.uniform(0.15, 0.35) * cfg.segment_length;
  const auto adj = adjacent_lanes(subject_lane, cfg.lanes);

  VehicleTrack subject;
  subject.id = 1;
  subject.length = rng.uniform(4.2, 4.9);
  subject.width = rng.uniform(1.7, 2.0);
  subject.xs.resize(n_points);
  subject.ys.assign(n_points, lane_center(subject_lane));
  for (int i = 0; i < n_points; ++i) subject.xs[i] = x0 + v0 * kTau * i;

  std::vector<VehicleTrack> tracks{subject};
  int next_id = 2;

  const double regime = rng.uniform01();
  const bool with_pass = regime < 0.32 || (regime >= 0.62 && regime < 0.92);
  const bool with_dip = (regime >= 0.32 && regime < 0.62) || (regime >= 0.62 && regime < 0.92);

  // Same-lane companions; one of them is replaced by the dip profile below.
  const bool dip_in_front = rng.uniform01() < 0.5;
  const double front_gap = with_dip && dip_in_front ? rng.uniform(8.0, 13.0)
                                                    : rng.uniform(10.0, 22.0);
  const double rear_gap = with_dip && !dip_in_front ? rng.uniform(8.0, 13.0)
                                                    : rng.uniform(10.0, 22.0);

  const auto cosine_dip = [&](double g0) {
    // Bumper-gap profile: hold g0, dip to g_min on a raised cosine, recover.
    // The approach duration is derived from the dip depth so the peak of
    // |d2gap/dt2| stays near 5.4 m/s^2, inside the +-6 m/s^2 realism bound.
    const double t_a = rng.uniform(1.0, 2.5);
    const double g_min = rng.uniform(1.15, 2.2);
    const double span = g0 - g_min;
    const double t_ap = std::sqrt(span / 1.1);
    constexpr double kPi = 3.14159265358979323846;
    std::vector<double> gap(n_points);
    for (int i = 0; i < n_points; ++i) {
      const double t = kTau * i;
      const double u = std::clamp((t - t_a) / t_ap, 0.0, 2.0);
      gap[i] = g_min + span * 0.5 * (1.0 + std::cos(kPi * std::min(u, 2.0 - u)));
    }
    return gap;
  };

  {
    VehicleTrack lead;
    lead.id = next_id++;
    lead.length = rng.uniform(4.2, 4.9);
    lead.width = rng.uniform(1.7, 2.0);
    lead.ys.assign(n_points, lane_center(subject_lane));
    lead.xs.resize(n_points);
    const double half_lengths = 0.5 * (subject.length + lead.length);
    if (with_dip && dip_in_front) {
      const auto gap = cosine_dip(front_gap);
      for (int i = 0; i < n_points; ++i) {
        lead.xs[i] = subject.xs[i] + half_lengths + gap[i];
      }
    } else {
      for (int i = 0; i < n_points; ++i) {
        lead.xs[i] = subject.xs[i] + half_lengths + front_gap;
      }
    }
    tracks.push_back(lead);
  }
  {
    VehicleTrack lag;
    lag.id = next_id++;
    lag.length = rng.uniform(4.2, 4.9);
    lag.width = rng.uniform(1.7, 2.0);
    lag.ys.assign(n_points, lane_center(subject_lane));
    lag.xs.resize(n_points);
    const double half_lengths = 0.5 * (subject.length + lag.length);
    if (with_dip && !dip_in_front) {
      const auto gap = cosine_dip(rear_gap);
      for (int i = 0; i < n_points; ++i) {
        lag.xs[i] = subject.xs[i] - half_lengths - gap[i];
      }
    } else {
      for (int i = 0; i < n_points; ++i) {
        lag.xs[i] = subject.xs[i] - half_lengths - rear_gap;
      }
    }
    tracks.push_back(lag);
  }

  if (with_pass && !adj.empty()) {
    const int n_pass = 1 + (rng.uniform01() < 0.5 ? 1 : 0);
    const double dv_shared =
        (rng.uniform01() < 0.5 ? 1.0 : -1.0) * rng.uniform(2.5, 6.0);
    double last_cross = -kInf;
    for (int k = 0; k < n_pass; ++k) {
      // With a single adjacent lane both passers share one speed so they never
      // run into each other; with two lanes they are independent.
      const int lane = adj[static_cast<std::size_t>(k) % adj.size()];
      const double dv =
          adj.size() >= 2
              ? (rng.uniform01() < 0.5 ? 1.0 : -1.0) * rng.uniform(2.5, 6.0)
              : dv_shared;
      double t_cross = rng.uniform(1.5, cfg.noncrash_duration - 1.5);
      if (std::fabs(t_cross - last_cross) < 3.0) t_cross = last_cross + 3.0;
      last_cross = t_cross;
      const double v_pass = v0 + dv;
      if (v_pass < 5.0) continue;
      VehicleTrack pass;
      pass.id = next_id++;
      pass.length = rng.uniform(4.2, 4.9);
      pass.width = rng.uniform(1.7, 2.0);
      // Drift toward the shared lane boundary, capped so the side gap to the
      // subject stays above the 1 m non-crash floor with margin.
      const double drift_cap = 2.4 - 0.5 * (subject.width + pass.width);
      const double drift = rng.uniform(0.0, drift_cap);
      const double toward = lane > subject_lane ? -drift : drift;
      pass.ys.assign(n_points, lane_center(lane) + toward);
      pass.xs.resize(n_points);
      for (int i = 0; i < n_points; ++i) {
        pass.xs[i] = subject.xs[i] + dv * (kTau * i - t_cross);
      }
      tracks.push_back(pass);
    }
  }
  if (regime >= 0.9 && !adj.empty()) {
    // Calm sample: only a distant steady runner in an adjacent lane.
    const int lane = adj[rng.below(adj.size())];
    tracks.push_back(constant_track(next_id++, rng, x0 + rng.uniform(15.0, 30.0),
                                    v0 * rng.uniform(0.98, 1.02), lane, n_points));
  }
  return assemble(sid, Label::non_crash, 1, 0, n_frames, tracks, cfg.lanes);
}

inline bool validate_crash(const TrajectorySample& s, int n_hist) {
  if (s.frames.size() < static_cast<std::size_t>(n_hist + 1)) return false;
  if (s.first_ds() != -n_hist || s.last_ds() != 0) return false;
  if (mrd_at(s, 0) != 0.0) return false;
  for (std::int64_t t = -n_hist; t < 0; ++t) {
    if (mrd_at(s, t) <= 0.0) return false;
  }
  return true;
}

}  // namespace detail

inline std::vector<TrajectorySample> generate_dataset(const SynthConfig& cfg) {
  if (cfg.n_crash < 0 || cfg.n_noncrash < 0) {
    throw std::invalid_argument("sample counts must be non-negative");
  }
  if (cfg.lanes < 1) throw std::invalid_argument("need at least one lane");
  if (!(cfg.v_min > 0.0) || !(cfg.v_max >= cfg.v_min)) {
    throw std::invalid_argument("invalid speed range");
  }
  const Rng master(cfg.seed);
  const int n_hist = static_cast<int>(std::llround(cfg.crash_history / kTau));
  const int n_rear =
      static_cast<int>(std::llround(cfg.rear_end_fraction * cfg.n_crash));

  std::vector<TrajectorySample> out;
  out.reserve(static_cast<std::size_t>(cfg.n_crash + cfg.n_noncrash));
  char name[32];
  for (int i = 0; i < cfg.n_crash; ++i) {
    std::snprintf(name, sizeof(name), "crash_%04d", i);
    const bool rear = i < n_rear;
    TrajectorySample s;
    bool ok = false;
    for (std::uint64_t attempt = 0; attempt < 12 && !ok; ++attempt) {
      Rng rng = master.derive(rear ? "rear_end" : "sideswipe",
                              static_cast<std::uint64_t>(i) * 16 + attempt);
      s = rear ? detail::make_rear_end(name, rng, cfg, n_hist)
               : detail::make_sideswipe(name, rng, cfg, n_hist);
      ok = detail::validate_crash(s, n_hist);
    }
    if (!ok) throw numerical_error("crash scenario failed validation after retries");
    out.push_back(std::move(s));
  }
  for (int i = 0; i < cfg.n_noncrash; ++i) {
    std::snprintf(name, sizeof(name), "noncrash_%04d", i);
    TrajectorySample s;
    bool ok = false;
    for (std::uint64_t attempt = 0; attempt < 12 && !ok; ++attempt) {
      Rng rng = master.derive("noncrash", static_cast<std::uint64_t>(i) * 16 + attempt);
      s = detail::make_noncrash(name, rng, cfg);
      ok = detail::min_mrd(s) > 1.05;
    }
    if (!ok) throw numerical_error("non-crash scenario failed validation after retries");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace nsbm
