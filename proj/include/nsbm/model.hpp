#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nsbm/common.hpp"
#include "nsbm/gev.hpp"
#include "nsbm/rng.hpp"
#include "nsbm/scene_graph.hpp"

namespace nsbm {

struct ModelDims {
  int d_v = kNodeFeatureDim;
  int d_e = kEdgeFeatureDim;
  int d_g = 16;    // pooled global edge embedding
  int d_l = 8;     // local attention embedding
  int d_score = 8; // hidden width of the global score MLP
  int hidden = 32; // width of both attention layers
  double lrelu_slope = 0.2;

  int h0() const { return d_v + d_g + d_l; }

  bool operator==(const ModelDims&) const = default;
};

// All learnable tensors plus the fixed input scaling. Gradients reuse the same
// struct (zeroed). Scalar parameters are 1-vectors so one visitor covers
// everything; visit order is fixed and doubles as the init/RNG order.
struct ModelParams {
  ModelDims dims;

  Eigen::MatrixXd score_w1;  // d_score x d_e
  Eigen::VectorXd score_b1;  // d_score
  Eigen::VectorXd score_w2;  // d_score
  Eigen::VectorXd score_b2;  // 1
  Eigen::MatrixXd glob_w;    // d_g x d_e
  Eigen::VectorXd glob_b;    // d_g

  Eigen::MatrixXd loc_we;    // d_l x d_e
  Eigen::MatrixXd loc_wh;    // d_l x d_v
  Eigen::VectorXd loc_a;     // 2*d_l

  Eigen::MatrixXd l1_w;      // hidden x h0
  Eigen::VectorXd l1_b;      // hidden
  Eigen::VectorXd l1_a;      // 2*hidden
  Eigen::VectorXd l1_c;      // 1, attention score bias
  Eigen::MatrixXd l2_w;      // hidden x hidden
  Eigen::VectorXd l2_b;      // hidden
  Eigen::VectorXd l2_a;      // 2*hidden
  Eigen::VectorXd l2_c;      // 1

  Eigen::MatrixXd head_w;    // 3 x hidden
  Eigen::VectorXd head_b;    // 3

  // Fixed per-channel input scales (divisors), serialized but never trained.
  Eigen::VectorXd node_scale;  // d_v
  Eigen::VectorXd edge_scale;  // d_e

  template <typename F>
  void visit(F&& f) {
    f("score_w1", score_w1);
    f("score_b1", score_b1);
    f("score_w2", score_w2);
    f("score_b2", score_b2);
    f("glob_w", glob_w);
    f("glob_b", glob_b);
    f("loc_we", loc_we);
    f("loc_wh", loc_wh);
    f("loc_a", loc_a);
    f("l1_w", l1_w);
    f("l1_b", l1_b);
    f("l1_a", l1_a);
    f("l1_c", l1_c);
    f("l2_w", l2_w);
    f("l2_b", l2_b);
    f("l2_a", l2_a);
    f("l2_c", l2_c);
    f("head_w", head_w);
    f("head_b", head_b);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<ModelParams*>(this)->visit(
        [&](const char* name, const auto& t) { f(name, t); });
  }
};

namespace detail {

inline Eigen::VectorXd default_node_scale() {
  Eigen::VectorXd s(kNodeFeatureDim);
  // speed, accel, heading, lane, x, y
  s << 30.0, 3.0, 1.0, 3.0, 400.0, 10.0;
  return s;
}

inline Eigen::VectorXd default_edge_scale() {
  Eigen::VectorXd s(kEdgeFeatureDim);
  // dspeed, daccel, dy, dx, dheading
  s << 10.0, 3.0, 5.0, 50.0, 1.0;
  return s;
}

}  // namespace detail

// Seeded Xavier-uniform init: each weight matrix uniform in
// +-sqrt(6/(fan_in+fan_out)); attention vectors count as 1 x n maps; biases 0.
inline ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p;
  p.dims = dims;
  p.score_w1.resize(dims.d_score, dims.d_e);
  p.score_b1 = Eigen::VectorXd::Zero(dims.d_score);
  p.score_w2.resize(dims.d_score);
  p.score_b2 = Eigen::VectorXd::Zero(1);
  p.glob_w.resize(dims.d_g, dims.d_e);
  p.glob_b = Eigen::VectorXd::Zero(dims.d_g);
  p.loc_we.resize(dims.d_l, dims.d_e);
  p.loc_wh.resize(dims.d_l, dims.d_v);
  p.loc_a.resize(2 * dims.d_l);
  p.l1_w.resize(dims.hidden, dims.h0());
  p.l1_b = Eigen::VectorXd::Zero(dims.hidden);
  p.l1_a.resize(2 * dims.hidden);
  p.l1_c = Eigen::VectorXd::Zero(1);
  p.l2_w.resize(dims.hidden, dims.hidden);
  p.l2_b = Eigen::VectorXd::Zero(dims.hidden);
  p.l2_a.resize(2 * dims.hidden);
  p.l2_c = Eigen::VectorXd::Zero(1);
  p.head_w.resize(3, dims.hidden);
  p.head_b = Eigen::VectorXd::Zero(3);
  p.node_scale = detail::default_node_scale();
  p.edge_scale = detail::default_edge_scale();

  Rng rng(seed);
  const auto fill = [&](Eigen::MatrixXd& m) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
    }
  };
  const auto fill_vec = [&](Eigen::VectorXd& v) {
    const double bound = std::sqrt(6.0 / static_cast<double>(1 + v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-bound, bound);
  };
  fill(p.score_w1);
  fill_vec(p.score_w2);
  fill(p.glob_w);
  fill(p.loc_we);
  fill(p.loc_wh);
  fill_vec(p.loc_a);
  fill(p.l1_w);
  fill_vec(p.l1_a);
  fill(p.l2_w);
  fill_vec(p.l2_a);
  fill(p.head_w);
  return p;
}

inline ModelParams zeros_like(const ModelParams& src) {
  ModelParams z = src;
  z.visit([](const char*, auto& t) { t.setZero(); });
  return z;
}

struct LabeledGraph {
  SceneGraph graph;
  double z = 0.0;
};

// Everything the backward pass needs, plus the activation signature used by
// the finite-difference checker to skip coordinates that sit on a ReLU /
// LeakyReLU kink or flip a pooling argmax under perturbation.
struct ForwardCache {
  std::vector<int> active_edges;            // edge slots
  std::vector<int> present_nodes;           // node slots
  std::array<Eigen::VectorXd, kNumNodes> h; // scaled node features
  std::array<Eigen::VectorXd, kNumEdges> A; // scaled edge features

  std::vector<Eigen::VectorXd> score_pre;   // per active edge, d_score
  std::vector<Eigen::VectorXd> score_hid;
  std::vector<double> score;
  std::vector<double> beta;
  std::vector<Eigen::VectorXd> glob_val;    // glob_w*A + glob_b per active edge
  Eigen::VectorXd Fg;

  std::array<Eigen::VectorXd, kNumEdges> We_A;
  std::array<Eigen::VectorXd, kNumNodes> Wh_h;
  std::array<std::vector<std::pair<int, int>>, kNumNodes> incident;  // (edge, other)
  std::array<std::vector<double>, kNumNodes> loc_pre;
  std::array<std::vector<double>, kNumNodes> loc_alpha;
  std::array<Eigen::VectorXd, kNumNodes> FL;
  std::array<Eigen::VectorXd, kNumNodes> H0;

  struct Layer {
    std::array<Eigen::VectorXd, kNumNodes> in;
    std::array<Eigen::VectorXd, kNumNodes> t;      // W * in
    std::array<std::vector<int>, kNumNodes> nbr;   // neighbor node slots
    std::array<std::vector<double>, kNumNodes> att_pre;
    std::array<std::vector<double>, kNumNodes> alpha;
    std::array<double, kNumNodes> alpha_sum{};
    std::array<Eigen::VectorXd, kNumNodes> pre;    // before ReLU
    std::array<Eigen::VectorXd, kNumNodes> out;
  };
  std::array<Layer, 2> layer;

  Eigen::VectorXd pooled;
  std::vector<int> pool_argmax;
  Eigen::Vector3d raw;

  std::vector<char> signature;
};

namespace detail {

inline double lrelu(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double lrelu_grad(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

inline std::vector<double> softmax(const std::vector<double>& s) {
  double m = s[0];
  for (const double v : s) m = std::max(m, v);
  std::vector<double> e(s.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    e[i] = std::exp(s[i] - m);
    sum += e[i];
  }
  for (double& v : e) v /= sum;
  return e;
}

// dL/dscore_j given dL/dalpha, for alpha = softmax(score).
inline std::vector<double> softmax_backward(const std::vector<double>& alpha,
                                            const std::vector<double>& dalpha) {
  double inner = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) inner += dalpha[i] * alpha[i];
  std::vector<double> ds(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) ds[i] = alpha[i] * (dalpha[i] - inner);
  return ds;
}

}  // namespace detail

// Forward pass: raw (xi_raw, sigma_raw, mu_raw) for one scene graph.
//
// Pipeline: scaled inputs -> global edge pool (score MLP softmax over active
// edges, weighted learned edge embeddings) -> per-node local edge attention ->
// concat(node, global, local) -> two attention layers -> elementwise max over
// present nodes -> linear head. Absent nodes and inactive edges never enter
// any sum or softmax. The attention layers aggregate the center node's
// transformed features weighted by neighbor attention, so a connected node's
// output reduces to ReLU(W h + b); an isolated present node aggregates the
// empty sum and yields ReLU(b).
inline Eigen::Vector3d forward(const SceneGraph& g, const ModelParams& p,
                               ForwardCache& c) {
  const ModelDims& d = p.dims;
  if (!g.present[0]) throw std::invalid_argument("scene graph lacks its subject node");
  c = ForwardCache{};
  const double slope = d.lrelu_slope;
  const auto sig_push = [&](bool b) { c.signature.push_back(b ? 1 : 0); };

  for (int v = 0; v < kNumNodes; ++v) {
    if (!g.present[v]) continue;
    c.present_nodes.push_back(v);
    Eigen::VectorXd hv(d.d_v);
    for (int k = 0; k < d.d_v; ++k) hv(k) = g.nodes[v][k] / p.node_scale(k);
    c.h[v] = hv;
  }
  for (int e = 0; e < kNumEdges; ++e) {
    if (!g.edges[e].active) continue;
    c.active_edges.push_back(e);
    Eigen::VectorXd ae(d.d_e);
    for (int k = 0; k < d.d_e; ++k) ae(k) = g.edges[e].features[k] / p.edge_scale(k);
    c.A[e] = ae;
  }

  // Global edge pool.
  c.Fg = Eigen::VectorXd::Zero(d.d_g);
  if (!c.active_edges.empty()) {
    for (const int e : c.active_edges) {
      Eigen::VectorXd pre = p.score_w1 * c.A[e] + p.score_b1;
      Eigen::VectorXd hid(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i) {
        sig_push(pre(i) > 0.0);
        hid(i) = detail::lrelu(pre(i), slope);
      }
      c.score.push_back(p.score_w2.dot(hid) + p.score_b2(0));
      c.score_pre.push_back(std::move(pre));
      c.score_hid.push_back(std::move(hid));
      c.glob_val.push_back(p.glob_w * c.A[e] + p.glob_b);
    }
    c.beta = detail::softmax(c.score);
    for (std::size_t i = 0; i < c.active_edges.size(); ++i) {
      c.Fg += c.beta[i] * c.glob_val[i];
    }
  }

  // Local edge attention.
  for (const int e : c.active_edges) c.We_A[e] = p.loc_we * c.A[e];
  for (const int v : c.present_nodes) c.Wh_h[v] = p.loc_wh * c.h[v];
  for (const int e : c.active_edges) {
    c.incident[g.edges[e].a].push_back({e, g.edges[e].b});
    c.incident[g.edges[e].b].push_back({e, g.edges[e].a});
  }
  for (const int v : c.present_nodes) {
    c.FL[v] = Eigen::VectorXd::Zero(d.d_l);
    const auto& inc = c.incident[v];
    if (inc.empty()) continue;
    auto& pre = c.loc_pre[v];
    for (const auto& [e, u] : inc) {
      const double s = p.loc_a.head(d.d_l).dot(c.We_A[e]) +
                       p.loc_a.tail(d.d_l).dot(c.Wh_h[v]);
      sig_push(s > 0.0);
      pre.push_back(s);
    }
    std::vector<double> act(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) act[i] = detail::lrelu(pre[i], slope);
    c.loc_alpha[v] = detail::softmax(act);
    for (std::size_t i = 0; i < inc.size(); ++i) {
      c.FL[v] += c.loc_alpha[v][i] * c.We_A[inc[i].first];
    }
  }

  for (const int v : c.present_nodes) {
    Eigen::VectorXd H(d.h0());
    H << c.h[v], c.Fg, c.FL[v];
    c.H0[v] = std::move(H);
  }

  // Two attention layers over the graph topology.
  for (int l = 0; l < 2; ++l) {
    auto& L = c.layer[l];
    const Eigen::MatrixXd& W = l == 0 ? p.l1_w : p.l2_w;
    const Eigen::VectorXd& b = l == 0 ? p.l1_b : p.l2_b;
    const Eigen::VectorXd& a = l == 0 ? p.l1_a : p.l2_a;
    const double cbias = l == 0 ? p.l1_c(0) : p.l2_c(0);
    for (const int v : c.present_nodes) {
      L.in[v] = l == 0 ? c.H0[v] : c.layer[0].out[v];
      L.t[v] = W * L.in[v];
    }
    for (const int v : c.present_nodes) {
      for (const auto& [e, u] : c.incident[v]) {
        (void)e;
        L.nbr[v].push_back(u);
      }
      double alpha_sum = 0.0;
      if (!L.nbr[v].empty()) {
        for (const int u : L.nbr[v]) {
          const double s =
              a.head(d.hidden).dot(L.t[v]) + a.tail(d.hidden).dot(L.t[u]) + cbias;
          sig_push(s > 0.0);
          L.att_pre[v].push_back(s);
        }
        std::vector<double> act(L.att_pre[v].size());
        for (std::size_t i = 0; i < act.size(); ++i) {
          act[i] = detail::lrelu(L.att_pre[v][i], slope);
        }
        L.alpha[v] = detail::softmax(act);
        for (const double w : L.alpha[v]) alpha_sum += w;
      }
      L.alpha_sum[v] = alpha_sum;
      L.pre[v] = alpha_sum * L.t[v] + b;
      Eigen::VectorXd out(L.pre[v].size());
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        sig_push(L.pre[v](i) > 0.0);
        out(i) = std::max(L.pre[v](i), 0.0);
      }
      L.out[v] = std::move(out);
    }
  }

  // Elementwise max pool over present nodes; earliest node wins ties.
  c.pooled = Eigen::VectorXd::Zero(d.hidden);
  c.pool_argmax.assign(d.hidden, c.present_nodes.front());
  for (int k = 0; k < d.hidden; ++k) {
    double best = -kInf;
    int arg = c.present_nodes.front();
    for (const int v : c.present_nodes) {
      const double val = c.layer[1].out[v](k);
      if (val > best) {
        best = val;
        arg = v;
      }
    }
    c.pooled(k) = best;
    c.pool_argmax[k] = arg;
    c.signature.push_back(static_cast<char>(arg));
  }

  c.raw = p.head_w * c.pooled + p.head_b;
  return c.raw;
}

inline GevParams forward_params(const SceneGraph& g, const ModelParams& p) {
  ForwardCache cache;
  const Eigen::Vector3d raw = forward(g, p, cache);
  return transform_raw({raw(0), raw(1), raw(2)});
}

// Reverse pass for one graph; accumulates parameter gradients into `grad`.
// `draw` is dL/d(xi_raw, sigma_raw, mu_raw). Hand-derived chain rule; the
// finite-difference checker in the test suite is the arbiter.
inline void backward(const SceneGraph& g, const ModelParams& p, const ForwardCache& c,
                     const Eigen::Vector3d& draw, ModelParams& grad) {
  const ModelDims& d = p.dims;
  const double slope = d.lrelu_slope;

  grad.head_w += draw * c.pooled.transpose();
  grad.head_b += draw;
  Eigen::VectorXd dpooled = p.head_w.transpose() * draw;

  std::array<Eigen::VectorXd, kNumNodes> dout;
  for (const int v : c.present_nodes) dout[v] = Eigen::VectorXd::Zero(d.hidden);
  for (int k = 0; k < d.hidden; ++k) dout[c.pool_argmax[k]](k) += dpooled(k);

  for (int l = 1; l >= 0; --l) {
    const auto& L = c.layer[l];
    const Eigen::MatrixXd& W = l == 0 ? p.l1_w : p.l2_w;
    const Eigen::VectorXd& a = l == 0 ? p.l1_a : p.l2_a;
    Eigen::MatrixXd& gW = l == 0 ? grad.l1_w : grad.l2_w;
    Eigen::VectorXd& gb = l == 0 ? grad.l1_b : grad.l2_b;
    Eigen::VectorXd& ga = l == 0 ? grad.l1_a : grad.l2_a;
    Eigen::VectorXd& gc = l == 0 ? grad.l1_c : grad.l2_c;

    std::array<Eigen::VectorXd, kNumNodes> dt;
    for (const int v : c.present_nodes) dt[v] = Eigen::VectorXd::Zero(d.hidden);

    for (const int v : c.present_nodes) {
      Eigen::VectorXd dpre(d.hidden);
      for (int k = 0; k < d.hidden; ++k) {
        dpre(k) = L.pre[v](k) > 0.0 ? dout[v](k) : 0.0;
      }
      gb += dpre;
      if (L.nbr[v].empty()) continue;
      const double dalpha_sum = dpre.dot(L.t[v]);
      dt[v] += L.alpha_sum[v] * dpre;
      // All alphas share the same downstream sensitivity; the softmax jacobian
      // sends that to (numerically) zero score gradients, carried through for
      // honesty rather than shortcut to zero.
      const std::vector<double> dalpha(L.nbr[v].size(), dalpha_sum);
      const std::vector<double> dact = detail::softmax_backward(L.alpha[v], dalpha);
      for (std::size_t i = 0; i < L.nbr[v].size(); ++i) {
        const double ds = dact[i] * detail::lrelu_grad(L.att_pre[v][i], slope);
        if (ds == 0.0) continue;
        const int u = L.nbr[v][i];
        ga.head(d.hidden) += ds * L.t[v];
        ga.tail(d.hidden) += ds * L.t[u];
        gc(0) += ds;
        dt[v] += ds * a.head(d.hidden);
        dt[u] += ds * a.tail(d.hidden);
      }
    }

    for (const int v : c.present_nodes) {
      gW += dt[v] * L.in[v].transpose();
      if (l == 1) dout[v] = W.transpose() * dt[v];  // dL/d(layer-1 output)
    }
    if (l == 0) {
      // Split each node's H0 gradient into its global / local parts. The raw
      // node-feature slice is data and receives no gradient.
      Eigen::VectorXd dFg = Eigen::VectorXd::Zero(d.d_g);
      std::array<Eigen::VectorXd, kNumNodes> dFL;
      for (const int v : c.present_nodes) {
        const Eigen::VectorXd din = W.transpose() * dt[v];
        dFg += din.segment(d.d_v, d.d_g);
        dFL[v] = din.tail(d.d_l);
      }

      // Local attention backward.
      std::array<Eigen::VectorXd, kNumEdges> dWeA;
      for (const int e : c.active_edges) dWeA[e] = Eigen::VectorXd::Zero(d.d_l);
      std::array<Eigen::VectorXd, kNumNodes> dWhh;
      for (const int v : c.present_nodes) dWhh[v] = Eigen::VectorXd::Zero(d.d_l);

      for (const int v : c.present_nodes) {
        const auto& inc = c.incident[v];
        if (inc.empty()) continue;
        std::vector<double> dalpha(inc.size());
        for (std::size_t i = 0; i < inc.size(); ++i) {
          dWeA[inc[i].first] += c.loc_alpha[v][i] * dFL[v];
          dalpha[i] = dFL[v].dot(c.We_A[inc[i].first]);
        }
        const std::vector<double> dact =
            detail::softmax_backward(c.loc_alpha[v], dalpha);
        for (std::size_t i = 0; i < inc.size(); ++i) {
          const double ds = dact[i] * detail::lrelu_grad(c.loc_pre[v][i], slope);
          if (ds == 0.0) continue;
          grad.loc_a.head(d.d_l) += ds * c.We_A[inc[i].first];
          grad.loc_a.tail(d.d_l) += ds * c.Wh_h[v];
          dWeA[inc[i].first] += ds * p.loc_a.head(d.d_l);
          dWhh[v] += ds * p.loc_a.tail(d.d_l);
        }
      }
      for (const int e : c.active_edges) {
        grad.loc_we += dWeA[e] * c.A[e].transpose();
      }
      for (const int v : c.present_nodes) {
        grad.loc_wh += dWhh[v] * c.h[v].transpose();
      }

      // Global pool backward.
      if (!c.active_edges.empty()) {
        const std::size_t n = c.active_edges.size();
        std::vector<double> dbeta(n);
        for (std::size_t i = 0; i < n; ++i) {
          dbeta[i] = dFg.dot(c.glob_val[i]);
          grad.glob_w += (c.beta[i] * dFg) * c.A[c.active_edges[i]].transpose();
          grad.glob_b += c.beta[i] * dFg;
        }
        const std::vector<double> dscore = detail::softmax_backward(c.beta, dbeta);
        for (std::size_t i = 0; i < n; ++i) {
          grad.score_w2 += dscore[i] * c.score_hid[i];
          grad.score_b2(0) += dscore[i];
          Eigen::VectorXd dhid = dscore[i] * p.score_w2;
          Eigen::VectorXd dpre(dhid.size());
          for (Eigen::Index k = 0; k < dhid.size(); ++k) {
            dpre(k) = dhid(k) * detail::lrelu_grad(c.score_pre[i](k), slope);
          }
          grad.score_w1 += dpre * c.A[c.active_edges[i]].transpose();
          grad.score_b1 += dpre;
        }
      }
    }
  }
}

struct BatchLoss {
  double total = 0.0;
  bool any_clamped = false;
};

// Summed NLL over the batch and its parameter gradients (accumulated into
// `grad`, which must be zeros_like(p)).
inline BatchLoss loss_and_grads(const std::vector<LabeledGraph>& batch,
                                const ModelParams& p, ModelParams& grad) {
  BatchLoss out;
  ForwardCache cache;
  for (const LabeledGraph& item : batch) {
    const Eigen::Vector3d raw = forward(item.graph, p, cache);
    const GevParams gp = transform_raw({raw(0), raw(1), raw(2)});
    const GevGrad gg = gev_nll_grad(item.z, gp, /*clamp=*/true);
    out.total += gg.nll;
    out.any_clamped = out.any_clamped || gg.clamped;
    backward(item.graph, p, cache, {gg.d_xi_raw, gg.d_sigma_raw, gg.d_mu}, grad);
  }
  return out;
}

inline double batch_nll(const std::vector<LabeledGraph>& batch, const ModelParams& p,
                        std::vector<char>* signature = nullptr) {
  double total = 0.0;
  ForwardCache cache;
  for (const LabeledGraph& item : batch) {
    const Eigen::Vector3d raw = forward(item.graph, p, cache);
    const GevParams gp = transform_raw({raw(0), raw(1), raw(2)});
    const GevGrad gg = gev_nll_grad(item.z, gp, /*clamp=*/true);
    total += gg.nll;
    if (signature != nullptr) {
      signature->insert(signature->end(), cache.signature.begin(),
                        cache.signature.end());
      // The likelihood itself is piecewise: the support clamp, the gradient
      // floor, and the Gumbel/general branch switch are kinks just like
      // activation flips.
      signature->push_back(gg.clamped                  ? 'c'
                           : gg.floored                ? 't'
                           : std::fabs(gp.xi) < kXiEps ? 'g'
                           : gp.xi > 0.0               ? '+'
                                                       : '-');
    }
  }
  return total;
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
  int skipped = 0;  // coordinates sitting on an activation kink / argmax flip
};

// Central finite-difference check of every learnable coordinate against the
// analytic gradients. Coordinates whose +-h perturbation changes any
// activation sign, pooling argmax, likelihood branch, or support clamp/floor
// state relative to the unperturbed pass are skipped (the loss is locally
// non-smooth there). If the unperturbed pass itself has any clamped or
// floored item, every coordinate is skipped: below the gradient floor the
// analytic gradients are by design not the derivatives of the computed loss,
// so a finite difference of that loss is the wrong oracle.
// Agreement within 1e-7 absolute counts as exact.
inline GradCheckResult grad_check(const ModelParams& params,
                                  const std::vector<LabeledGraph>& batch,
                                  double h = 1e-5) {
  ModelParams grad = zeros_like(params);
  loss_and_grads(batch, params, grad);

  GradCheckResult res;
  ModelParams work = params;
  std::vector<char> sig_center;
  batch_nll(batch, work, &sig_center);
  const bool center_frozen =
      std::find(sig_center.begin(), sig_center.end(), 'c') != sig_center.end() ||
      std::find(sig_center.begin(), sig_center.end(), 't') != sig_center.end();

  // Parameter and gradient tensors in lockstep visit order.
  std::vector<double*> pdata, gdata;
  std::vector<Eigen::Index> psize;
  work.visit([&](const char*, auto& t) {
    pdata.push_back(t.data());
    psize.push_back(t.size());
  });
  grad.visit([&](const char*, auto& t) { gdata.push_back(t.data()); });

  for (std::size_t ti = 0; ti < pdata.size(); ++ti) {
    for (Eigen::Index i = 0; i < psize[ti]; ++i) {
      double& w = pdata[ti][i];
      const double saved = w;
      std::vector<char> sig_plus, sig_minus;
      w = saved + h;
      const double lp = batch_nll(batch, work, &sig_plus);
      w = saved - h;
      const double lm = batch_nll(batch, work, &sig_minus);
      w = saved;
      if (center_frozen || sig_plus != sig_minus || sig_plus != sig_center) {
        ++res.skipped;
        continue;
      }
      const double fd = (lp - lm) / (2.0 * h);
      const double an = gdata[ti][i];
      ++res.checked;
      const double diff = std::fabs(fd - an);
      if (diff <= 1e-7) continue;
      res.max_rel_err =
          std::max(res.max_rel_err, diff / std::max({std::fabs(fd), std::fabs(an)}));
    }
  }
  return res;
}

inline void to_json(nlohmann::json& j, const ModelDims& d) {
  j = nlohmann::json{{"d_v", d.d_v},       {"d_e", d.d_e},
                     {"d_g", d.d_g},       {"d_l", d.d_l},
                     {"d_score", d.d_score}, {"hidden", d.hidden},
                     {"lrelu_slope", d.lrelu_slope}};
}

inline void from_json(const nlohmann::json& j, ModelDims& d) {
  j.at("d_v").get_to(d.d_v);
  j.at("d_e").get_to(d.d_e);
  j.at("d_g").get_to(d.d_g);
  j.at("d_l").get_to(d.d_l);
  j.at("d_score").get_to(d.d_score);
  j.at("hidden").get_to(d.hidden);
  j.at("lrelu_slope").get_to(d.lrelu_slope);
}

// Weights serialize as row-major flat arrays keyed by tensor name.
inline nlohmann::json params_to_json(const ModelParams& p) {
  nlohmann::json weights;
  p.visit([&](const char* name, const auto& t) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) flat.push_back(t(r, c));
    }
    weights[name] = flat;
  });
  return nlohmann::json{
      {"dims", p.dims},
      {"node_scale", std::vector<double>(p.node_scale.data(),
                                         p.node_scale.data() + p.node_scale.size())},
      {"edge_scale", std::vector<double>(p.edge_scale.data(),
                                         p.edge_scale.data() + p.edge_scale.size())},
      {"weights", weights}};
}

inline ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams p = init_params(j.at("dims").get<ModelDims>(), 0);
  const auto node_scale = j.at("node_scale").get<std::vector<double>>();
  const auto edge_scale = j.at("edge_scale").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(node_scale.size()) != p.node_scale.size() ||
      static_cast<Eigen::Index>(edge_scale.size()) != p.edge_scale.size()) {
    throw data_error("model JSON scale vectors have wrong sizes");
  }
  for (Eigen::Index i = 0; i < p.node_scale.size(); ++i) p.node_scale(i) = node_scale[i];
  for (Eigen::Index i = 0; i < p.edge_scale.size(); ++i) p.edge_scale(i) = edge_scale[i];
  const auto& weights = j.at("weights");
  p.visit([&](const char* name, auto& t) {
    const auto flat = weights.at(name).template get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != t.size()) {
      throw data_error(std::string("model JSON tensor '") + name + "' has wrong size");
    }
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = flat[k++];
    }
  });
  return p;
}

}  // namespace nsbm
