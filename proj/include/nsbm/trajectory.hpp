#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsbm/common.hpp"
#include "nsbm/geometry.hpp"

namespace nsbm {

struct VehicleState {
  int id = 0;
  std::int64_t t_ds = 0;  // timestamp, deciseconds
  double x = 0.0;         // longitudinal position, m (road-aligned frame)
  double y = 0.0;         // lateral position, m
  double speed = 0.0;     // m/s, non-negative
  double accel = 0.0;     // m/s^2
  double heading = 0.0;   // rad, 0 = along +x
  int lane = 1;           // 1 = leftmost
  double length = 4.5;    // m
  double width = 1.8;     // m
};

inline OrientedBox vehicle_box(const VehicleState& v) {
  return OrientedBox{v.x, v.y, v.heading, v.length, v.width};
}

enum class Label { crash, non_crash };

inline std::string to_string(Label l) {
  return l == Label::crash ? "crash" : "non_crash";
}

inline Label label_from_string(const std::string& s) {
  if (s == "crash") return Label::crash;
  if (s == "non_crash") return Label::non_crash;
  throw data_error("unknown label '" + s + "'");
}

using Frame = std::vector<VehicleState>;

// One recorded scenario: all vehicles on the segment, one designated subject.
// Frames sit on the tau grid; crash samples are re-indexed so the collision
// frame is t = 0 and earlier frames have negative timestamps.
struct TrajectorySample {
  std::string sample_id;
  Label label = Label::non_crash;
  int subject_id = 0;
  std::map<std::int64_t, Frame> frames;

  std::int64_t first_ds() const {
    if (frames.empty()) throw data_error("sample '" + sample_id + "' has no frames");
    return frames.begin()->first;
  }
  std::int64_t last_ds() const {
    if (frames.empty()) throw data_error("sample '" + sample_id + "' has no frames");
    return frames.rbegin()->first;
  }
  const Frame& frame(std::int64_t t_ds) const {
    const auto it = frames.find(t_ds);
    if (it == frames.end()) {
      throw data_error("sample '" + sample_id + "' missing frame at t=" +
                       std::to_string(to_seconds(t_ds)));
    }
    return it->second;
  }
  const VehicleState& subject_at(std::int64_t t_ds) const {
    for (const auto& v : frame(t_ds)) {
      if (v.id == subject_id) return v;
    }
    throw std::invalid_argument("subject not in frame");
  }
};

// Neighbor roles around the subject. Role order is fixed and doubles as the
// node index of the scene graph: subject first, then leads left-to-right,
// then lags left-to-right.
enum class Role : int {
  subject = 0,
  lead_left = 1,
  lead_same = 2,
  lead_right = 3,
  lag_left = 4,
  lag_same = 5,
  lag_right = 6,
};

inline constexpr std::array<const char*, 7> kRoleNames{
    "subject", "lead_left", "lead_same", "lead_right",
    "lag_left", "lag_same", "lag_right"};

struct NeighborSet {
  // Indexed by Role 1..6; entry 0 unused so indices line up with node slots.
  std::array<std::optional<VehicleState>, 7> slots;

  const std::optional<VehicleState>& at(Role r) const {
    return slots[static_cast<int>(r)];
  }
  int count() const {
    int c = 0;
    for (int i = 1; i < 7; ++i) c += slots[i].has_value();
    return c;
  }
};

// Nearest vehicle ahead / behind the subject in its own and both adjacent
// lanes. "Left" is the smaller lane index; lane indices below 1 do not exist.
// Distance ties are broken toward the smaller vehicle id.
inline NeighborSet identify_neighbors(const Frame& frame, int subject_id) {
  const VehicleState* subject = nullptr;
  for (const auto& v : frame) {
    if (v.id == subject_id) {
      subject = &v;
      break;
    }
  }
  if (subject == nullptr) throw std::invalid_argument("subject not in frame");

  NeighborSet out;
  const auto consider = [&](Role role, const VehicleState& v, double dist) {
    auto& slot = out.slots[static_cast<int>(role)];
    if (!slot.has_value()) {
      slot = v;
      return;
    }
    const double cur = std::fabs(slot->x - subject->x);
    if (dist < cur || (dist == cur && v.id < slot->id)) slot = v;
  };

  for (const auto& v : frame) {
    if (v.id == subject_id) continue;
    const int dlane = v.lane - subject->lane;
    if (dlane < -1 || dlane > 1) continue;
    if (subject->lane + dlane < 1) continue;
    const bool ahead = v.x > subject->x;
    const bool behind = v.x < subject->x;
    if (!ahead && !behind) continue;
    Role role;
    if (dlane == -1) role = ahead ? Role::lead_left : Role::lag_left;
    else if (dlane == 0) role = ahead ? Role::lead_same : Role::lag_same;
    else role = ahead ? Role::lead_right : Role::lag_right;
    consider(role, v, std::fabs(v.x - subject->x));
  }
  return out;
}

// Minimum rectangle distance: smallest gap between the subject's bounding box
// and any neighbor's, 0 on overlap, +inf when the neighbor set is empty.
inline double compute_mrd(const VehicleState& subject, const NeighborSet& neighbors) {
  double best = kInf;
  const OrientedBox sbox = vehicle_box(subject);
  for (int i = 1; i < 7; ++i) {
    const auto& n = neighbors.slots[i];
    if (!n.has_value()) continue;
    best = std::min(best, box_gap(sbox, vehicle_box(*n)));
  }
  return best;
}

struct DangerPoint {
  std::int64_t t_ds = 0;
  double x = 0.0;  // danger value, -MRD; -inf when the subject has no neighbors
};

// Danger series X_t = -MRD(t) over a window of length T. Crash samples default
// to the pre-crash window [-T, 0]; for non-crash samples the caller supplies
// the window start. T must sit on the tau grid and the window must be fully
// covered by frames.
inline std::vector<DangerPoint> danger_series(
    const TrajectorySample& sample, double T,
    std::optional<double> start_seconds = std::nullopt) {
  const std::int64_t T_ds = to_ds(T);
  if (T_ds <= 0) throw std::invalid_argument("window length must be positive");
  std::int64_t start_ds;
  if (start_seconds.has_value()) {
    start_ds = to_ds(*start_seconds);
  } else if (sample.label == Label::crash) {
    start_ds = -T_ds;
  } else {
    start_ds = sample.first_ds();
  }
  std::vector<DangerPoint> out;
  out.reserve(static_cast<std::size_t>(T_ds + 1));
  for (std::int64_t t = start_ds; t <= start_ds + T_ds; ++t) {
    const Frame& f = sample.frame(t);
    const VehicleState& subject = sample.subject_at(t);
    const NeighborSet neighbors = identify_neighbors(f, sample.subject_id);
    const double mrd = compute_mrd(subject, neighbors);
    out.push_back({t, -mrd});
  }
  return out;
}

struct BlockMax {
  std::int64_t t_ds = 0;   // frame achieving the maximum (earliest on ties)
  double z = 0.0;
  int block_index = 0;     // position of the block within the series
};

// Non-overlapping block maxima. `w` is the block length in seconds, a multiple
// of tau covering at least two samples. A trailing partial block is dropped,
// as is any block containing no finite value (the no-neighbor sentinel).
inline std::vector<BlockMax> block_maxima(const std::vector<DangerPoint>& series,
                                          double w) {
  const std::int64_t w_ds = to_ds(w);
  const auto m = static_cast<std::size_t>(w_ds);
  if (m < 2) throw std::invalid_argument("block must span at least two samples");
  std::vector<BlockMax> out;
  if (series.size() < m) return out;
  const std::size_t n_blocks = series.size() / m;
  for (std::size_t b = 0; b < n_blocks; ++b) {
    const DangerPoint* best = nullptr;
    for (std::size_t i = b * m; i < (b + 1) * m; ++i) {
      const DangerPoint& p = series[i];
      if (p.x == -kInf) continue;
      if (best == nullptr || p.x > best->x) best = &p;
    }
    if (best == nullptr) continue;
    out.push_back({best->t_ds, best->x, static_cast<int>(b)});
  }
  return out;
}

// A retained extreme interaction: block maximum closer than Q meters.
struct ExtremeEvent {
  std::string sample_id;
  std::int64_t t_ds = 0;
  double z = 0.0;  // danger value in (-Q, 0]
  int block_index = 0;
};

// Pool per-sample block maxima, keeping only genuinely dangerous ones
// (z > -Q, i.e. MRD < Q). Output is ordered by (sample_id, t).
inline std::vector<ExtremeEvent> filter_and_pool(
    const std::map<std::string, std::vector<BlockMax>>& per_sample, double Q) {
  if (!(Q > 0.0)) throw std::invalid_argument("threshold Q must be positive");
  std::vector<ExtremeEvent> out;
  for (const auto& [sid, maxima] : per_sample) {
    for (const BlockMax& b : maxima) {
      if (b.z > -Q) out.push_back({sid, b.t_ds, b.z, b.block_index});
    }
  }
  return out;
}

}  // namespace nsbm
