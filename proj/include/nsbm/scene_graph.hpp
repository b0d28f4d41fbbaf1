#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "nsbm/common.hpp"
#include "nsbm/trajectory.hpp"

namespace nsbm {

inline constexpr int kNumNodes = 7;
inline constexpr int kNumEdges = 11;
inline constexpr int kNodeFeatureDim = 6;  // speed, accel, heading, lane, x, y
inline constexpr int kEdgeFeatureDim = 5;  // dspeed, daccel, dy, dx, dheading

// Fixed edge slots: the subject star plus the chains along the lead and lag
// rows and the lead_same-lag_same link; 11 slots total. Endpoints are node
// indices in Role order, first < second.
inline constexpr std::array<std::array<int, 2>, kNumEdges> kEdgeEndpoints{{
    {0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}, {0, 6},
    {1, 2}, {2, 3}, {4, 5}, {5, 6}, {2, 5},
}};

struct SceneGraphEdge {
  int a = 0;  // lower node index
  int b = 0;  // higher node index
  bool active = false;
  std::array<double, kEdgeFeatureDim> features{};
};

// Fixed-topology interaction graph of one frame. Node slot i corresponds to
// Role(i); absent roles keep zeroed features and present=false, and an edge is
// active only when both endpoints are present.
struct SceneGraph {
  std::string sample_id;
  std::int64_t t_ds = 0;
  std::array<bool, kNumNodes> present{};
  std::array<std::array<double, kNodeFeatureDim>, kNumNodes> nodes{};
  std::array<SceneGraphEdge, kNumEdges> edges{};

  int active_edge_count() const {
    int c = 0;
    for (const auto& e : edges) c += e.active;
    return c;
  }
};

namespace detail {

inline std::array<double, kNodeFeatureDim> node_features(const VehicleState& v) {
  return {v.speed, v.accel, v.heading, static_cast<double>(v.lane), v.x, v.y};
}

// Differences taken endpoint_b - endpoint_a (lower role index to higher);
// heading difference wrapped to (-pi, pi].
inline std::array<double, kEdgeFeatureDim> edge_features(const VehicleState& a,
                                                         const VehicleState& b) {
  return {b.speed - a.speed, b.accel - a.accel, b.y - a.y, b.x - a.x,
          wrap_angle(b.heading - a.heading)};
}

}  // namespace detail

inline SceneGraph build_graph(const Frame& frame, int subject_id,
                              const NeighborSet& neighbors,
                              const std::string& sample_id = "",
                              std::int64_t t_ds = 0) {
  const VehicleState* subject = nullptr;
  for (const auto& v : frame) {
    if (v.id == subject_id) {
      subject = &v;
      break;
    }
  }
  if (subject == nullptr) throw std::invalid_argument("subject not in frame");

  SceneGraph g;
  g.sample_id = sample_id;
  g.t_ds = t_ds;
  std::array<const VehicleState*, kNumNodes> states{};
  states[0] = subject;
  g.present[0] = true;
  g.nodes[0] = detail::node_features(*subject);
  for (int i = 1; i < kNumNodes; ++i) {
    const auto& slot = neighbors.slots[i];
    if (slot.has_value()) {
      states[i] = &*slot;
      g.present[i] = true;
      g.nodes[i] = detail::node_features(*slot);
    }
  }
  for (int e = 0; e < kNumEdges; ++e) {
    const int a = kEdgeEndpoints[e][0];
    const int b = kEdgeEndpoints[e][1];
    g.edges[e].a = a;
    g.edges[e].b = b;
    if (g.present[a] && g.present[b]) {
      g.edges[e].active = true;
      g.edges[e].features = detail::edge_features(*states[a], *states[b]);
    }
  }
  return g;
}

inline void to_json(nlohmann::json& j, const SceneGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < kNumNodes; ++i) {
    nodes.push_back({{"role", kRoleNames[i]},
                     {"present", g.present[i]},
                     {"features", g.nodes[i]}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges) {
    edges.push_back({{"a", kRoleNames[e.a]},
                     {"b", kRoleNames[e.b]},
                     {"active", e.active},
                     {"features", e.features}});
  }
  j = nlohmann::json{{"sample_id", g.sample_id},
                     {"t", to_seconds(g.t_ds)},
                     {"nodes", nodes},
                     {"edges", edges}};
}

inline void from_json(const nlohmann::json& j, SceneGraph& g) {
  g.sample_id = j.at("sample_id").get<std::string>();
  g.t_ds = to_ds(j.at("t").get<double>());
  const auto& nodes = j.at("nodes");
  const auto& edges = j.at("edges");
  if (nodes.size() != kNumNodes || edges.size() != kNumEdges) {
    throw data_error("scene graph JSON has wrong node/edge counts");
  }
  for (int i = 0; i < kNumNodes; ++i) {
    if (nodes[i].at("role").get<std::string>() != kRoleNames[i]) {
      throw data_error("scene graph JSON roles out of order");
    }
    g.present[i] = nodes[i].at("present").get<bool>();
    nodes[i].at("features").get_to(g.nodes[i]);
  }
  for (int e = 0; e < kNumEdges; ++e) {
    g.edges[e].a = kEdgeEndpoints[e][0];
    g.edges[e].b = kEdgeEndpoints[e][1];
    g.edges[e].active = edges[e].at("active").get<bool>();
    edges[e].at("features").get_to(g.edges[e].features);
  }
  return;
}

}  // namespace nsbm
