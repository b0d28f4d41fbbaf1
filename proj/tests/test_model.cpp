#include <cmath>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "nsbm/model.hpp"
#include "nsbm/rng.hpp"

namespace {

using nsbm::LabeledGraph;
using nsbm::ModelDims;
using nsbm::ModelParams;
using nsbm::Rng;
using nsbm::SceneGraph;

// Synthetic graph with a random presence pattern and plausible feature
// magnitudes; edge activity is kept consistent with node presence.
SceneGraph random_graph(Rng& rng) {
  SceneGraph g;
  g.sample_id = "synthetic";
  g.t_ds = 0;
  g.present[0] = true;
  for (int i = 1; i < nsbm::kNumNodes; ++i) g.present[i] = rng.uniform01() < 0.7;
  for (int i = 0; i < nsbm::kNumNodes; ++i) {
    if (!g.present[i]) continue;
    g.nodes[i] = {rng.uniform(5.0, 35.0),  rng.uniform(-5.0, 3.0),
                  rng.uniform(-0.2, 0.2),  static_cast<double>(1 + rng.below(3)),
                  rng.uniform(0.0, 300.0), rng.uniform(0.0, 7.0)};
  }
  for (int e = 0; e < nsbm::kNumEdges; ++e) {
    const int a = nsbm::kEdgeEndpoints[e][0];
    const int b = nsbm::kEdgeEndpoints[e][1];
    g.edges[e].a = a;
    g.edges[e].b = b;
    g.edges[e].active = g.present[a] && g.present[b];
    if (g.edges[e].active) {
      g.edges[e].features = {rng.uniform(-8.0, 8.0), rng.uniform(-3.0, 3.0),
                             rng.uniform(-4.0, 4.0), rng.uniform(-40.0, 40.0),
                             rng.uniform(-0.3, 0.3)};
    }
  }
  return g;
}

std::vector<LabeledGraph> random_batch(Rng& rng, int n) {
  std::vector<LabeledGraph> batch;
  for (int i = 0; i < n; ++i) {
    batch.push_back({random_graph(rng), rng.uniform(-2.8, -0.1)});
  }
  return batch;
}

TEST(ModelForward, DeterministicAndWellFormed) {
  Rng rng(17);
  const ModelParams p = nsbm::init_params(ModelDims{}, 4);
  for (int trial = 0; trial < 20; ++trial) {
    const SceneGraph g = random_graph(rng);
    const nsbm::GevParams a = nsbm::forward_params(g, p);
    const nsbm::GevParams b = nsbm::forward_params(g, p);
    EXPECT_EQ(a.xi, b.xi);
    EXPECT_EQ(a.sigma, b.sigma);
    EXPECT_EQ(a.mu, b.mu);
    EXPECT_TRUE(std::isfinite(a.mu));
    EXPECT_GT(a.sigma, 0.0);
    EXPECT_LT(std::fabs(a.xi), 1.0);  // tanh-squashed shape
  }
}

TEST(ModelForward, RequiresSubjectNode) {
  SceneGraph g;  // present[0] defaults to false
  const ModelParams p = nsbm::init_params(ModelDims{}, 1);
  EXPECT_THROW(nsbm::forward_params(g, p), std::invalid_argument);
}

TEST(ModelForward, LoneSubjectStillProducesParameters) {
  SceneGraph g;
  g.present[0] = true;
  g.nodes[0] = {20.0, 0.0, 0.0, 2.0, 150.0, 3.5};
  for (int e = 0; e < nsbm::kNumEdges; ++e) {
    g.edges[e].a = nsbm::kEdgeEndpoints[e][0];
    g.edges[e].b = nsbm::kEdgeEndpoints[e][1];
  }
  const ModelParams p = nsbm::init_params(ModelDims{}, 12);
  const nsbm::GevParams out = nsbm::forward_params(g, p);
  EXPECT_TRUE(std::isfinite(out.mu));
  EXPECT_GT(out.sigma, 0.0);
}

TEST(ModelForward, PresenceChangesOutput) {
  Rng rng(23);
  SceneGraph g = random_graph(rng);
  // Force at least one non-subject node present.
  if (!g.present[2]) {
    g.present[2] = true;
    g.nodes[2] = {22.0, -1.0, 0.0, 2.0, 120.0, 3.5};
    for (int e = 0; e < nsbm::kNumEdges; ++e) {
      const int a = nsbm::kEdgeEndpoints[e][0];
      const int b = nsbm::kEdgeEndpoints[e][1];
      g.edges[e].active = g.present[a] && g.present[b];
      if (g.edges[e].active && g.edges[e].features[3] == 0.0) {
        g.edges[e].features = {1.0, 0.5, 0.0, 20.0, 0.0};
      }
    }
  }
  SceneGraph masked = g;
  for (int i = 1; i < nsbm::kNumNodes; ++i) masked.present[i] = false;
  for (auto& e : masked.edges) {
    e.active = false;
    e.features = {};
  }
  const ModelParams p = nsbm::init_params(ModelDims{}, 5);
  const auto full = nsbm::forward_params(g, p);
  const auto lone = nsbm::forward_params(masked, p);
  EXPECT_NE(full.mu, lone.mu);
}

TEST(ModelGradients, FullNetworkGradCheck) {
  ModelDims dims;
  dims.d_g = 4;
  dims.d_l = 3;
  dims.d_score = 3;
  dims.hidden = 4;
  const ModelParams p = nsbm::init_params(dims, 2024);
  Rng rng(61);
  const auto batch = random_batch(rng, 6);
  const auto res = nsbm::grad_check(p, batch, 1e-5);
  EXPECT_LT(res.max_rel_err, 1e-4);
  EXPECT_GT(res.checked, 100);
  // Kink skips should be rare relative to the coordinate count.
  EXPECT_LT(res.skipped, res.checked / 4);
}

TEST(ModelGradients, DefaultSizeGradCheckOnSmallBatch) {
  const ModelParams p = nsbm::init_params(ModelDims{}, 31);
  Rng rng(62);
  const auto batch = random_batch(rng, 2);
  const auto res = nsbm::grad_check(p, batch, 1e-5);
  EXPECT_LT(res.max_rel_err, 1e-4);
  EXPECT_GT(res.checked, 1000);
}

TEST(ModelGradients, BatchGradientsAreAdditive) {
  const ModelParams p = nsbm::init_params(ModelDims{}, 8);
  Rng rng(63);
  const auto batch = random_batch(rng, 4);
  ModelParams g_all = nsbm::zeros_like(p);
  const auto loss_all = nsbm::loss_and_grads(batch, p, g_all);

  double total = 0.0;
  ModelParams g_sum = nsbm::zeros_like(p);
  for (const LabeledGraph& item : batch) {
    total += nsbm::loss_and_grads({item}, p, g_sum).total;
  }
  EXPECT_NEAR(loss_all.total, total, 1e-10);
  EXPECT_NEAR((g_all.l1_w - g_sum.l1_w).cwiseAbs().maxCoeff(), 0.0, 1e-10);
  EXPECT_NEAR((g_all.head_w - g_sum.head_w).cwiseAbs().maxCoeff(), 0.0, 1e-10);
  EXPECT_NEAR((g_all.score_w1 - g_sum.score_w1).cwiseAbs().maxCoeff(), 0.0, 1e-10);
}

TEST(ModelGradients, BatchNllMatchesLoss) {
  const ModelParams p = nsbm::init_params(ModelDims{}, 9);
  Rng rng(64);
  const auto batch = random_batch(rng, 5);
  ModelParams g = nsbm::zeros_like(p);
  const auto loss = nsbm::loss_and_grads(batch, p, g);
  EXPECT_NEAR(nsbm::batch_nll(batch, p), loss.total, 1e-12);
}

TEST(ModelParamsJson, RoundTripIsBitExact) {
  ModelDims dims;
  dims.hidden = 8;
  dims.d_g = 5;
  const ModelParams p = nsbm::init_params(dims, 123);
  const nlohmann::json j = nsbm::params_to_json(p);
  const ModelParams q = nsbm::params_from_json(j);
  EXPECT_EQ(q.dims, p.dims);
  EXPECT_EQ(nsbm::params_to_json(q).dump(), j.dump());
  EXPECT_EQ((p.l1_w - q.l1_w).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((p.loc_a - q.loc_a).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((p.node_scale - q.node_scale).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ModelParamsJson, InitIsDeterministicBySeed) {
  const ModelParams a = nsbm::init_params(ModelDims{}, 42);
  const ModelParams b = nsbm::init_params(ModelDims{}, 42);
  const ModelParams c = nsbm::init_params(ModelDims{}, 43);
  EXPECT_EQ(nsbm::params_to_json(a).dump(), nsbm::params_to_json(b).dump());
  EXPECT_NE(nsbm::params_to_json(a).dump(), nsbm::params_to_json(c).dump());
}

}  // namespace
