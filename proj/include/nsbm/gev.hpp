#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nsbm/common.hpp"
#include "nsbm/rng.hpp"

namespace nsbm {

// Shape / scale / location of a generalized extreme value distribution.
// Conventions: CDF F(z) = exp(-(1 + xi*(z-mu)/sigma)^(-1/xi)) on its support,
// with the Gumbel limit used whenever |xi| < kXiEps.
struct GevParams {
  double xi = 0.0;
  double sigma = 1.0;
  double mu = 0.0;
};

// Unconstrained parameterization used by the optimizers:
// xi = tanh(xi_raw) in (-1,1), sigma = exp(sigma_raw) > 0, mu = mu_raw.
struct RawGevParams {
  double xi_raw = 0.0;
  double sigma_raw = 0.0;
  double mu_raw = 0.0;
};

inline constexpr double kXiEps = 1e-6;

// Lower clamp applied to the support expression 1 + xi*(z-mu)/sigma during
// training: an off-support item contributes the likelihood evaluated at this
// boundary, plus a warning flag.
inline constexpr double kSupportClamp = 1e-8;

// Training gradients are never evaluated below this support value. Between
// kSupportClamp and here the likelihood's derivatives grow like 1/s toward a
// 1/kSupportClamp blow-up that no learning-rate reduction can absorb, so the
// gradient of a nearly- or fully-off-support item is taken at this floor
// instead: same restoring direction, bounded magnitude.
inline constexpr double kGradientFloor = 1e-2;

inline GevParams transform_raw(const RawGevParams& r) {
  if (!std::isfinite(r.xi_raw) || !std::isfinite(r.sigma_raw) || !std::isfinite(r.mu_raw)) {
    throw std::invalid_argument("non-finite raw GEV parameters");
  }
  return GevParams{std::tanh(r.xi_raw), std::exp(r.sigma_raw), r.mu_raw};
}

inline void check_params(const GevParams& p) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma) || !std::isfinite(p.mu) ||
      !std::isfinite(p.xi)) {
    throw std::invalid_argument("invalid GEV parameters");
  }
}

// Support interval [lo, hi]; unbounded sides are +-inf.
inline std::pair<double, double> gev_support(const GevParams& p) {
  check_params(p);
  if (p.xi > kXiEps) return {p.mu - p.sigma / p.xi, kInf};
  if (p.xi < -kXiEps) return {-kInf, p.mu - p.sigma / p.xi};
  return {-kInf, kInf};
}

inline double gev_cdf(const GevParams& p, double z) {
  check_params(p);
  const double y = (z - p.mu) / p.sigma;
  if (std::fabs(p.xi) < kXiEps) {
    return std::exp(-std::exp(-y));
  }
  const double t = p.xi * y;
  const double s = 1.0 + t;
  if (s <= 0.0) return p.xi > 0.0 ? 0.0 : 1.0;
  return std::exp(-std::exp(-std::log1p(t) / p.xi));
}

// Log density; exactly -inf outside the support.
inline double gev_logpdf(const GevParams& p, double z) {
  check_params(p);
  const double y = (z - p.mu) / p.sigma;
  if (std::fabs(p.xi) < kXiEps) {
    return -std::log(p.sigma) - y - std::exp(-y);
  }
  const double t = p.xi * y;
  const double s = 1.0 + t;
  if (s <= 0.0) return -kInf;
  const double log_s = std::log1p(t);
  const double pow_term = std::exp(-log_s / p.xi);  // s^(-1/xi)
  return -std::log(p.sigma) - (1.0 + 1.0 / p.xi) * log_s - pow_term;
}

inline double gev_quantile(const GevParams& p, double u) {
  check_params(p);
  if (!(u > 0.0 && u < 1.0)) {
    throw std::invalid_argument("quantile level must lie in (0,1)");
  }
  const double nlu = -std::log(u);
  if (std::fabs(p.xi) < kXiEps) {
    return p.mu - p.sigma * std::log(nlu);
  }
  // ((-log u)^(-xi) - 1)/xi, written with expm1 so the Gumbel limit is smooth.
  return p.mu + p.sigma * std::expm1(-p.xi * std::log(nlu)) / p.xi;
}

inline std::vector<double> gev_sample(const GevParams& p, std::size_t n,
                                      std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& z : out) z = gev_quantile(p, rng.uniform01());
  return out;
}

// Per-item negative log likelihood and its gradients.
//
// The printed gradient formulas in common references disagree with each other
// in signs and factors; these are derived directly from the log density and
// are verified against a central finite-difference oracle in the test suite.
// The Gumbel branch fixes d_xi = 0 by convention.
struct GevGrad {
  double nll = 0.0;
  double d_xi = 0.0;     // dNLL/dxi
  double d_sigma = 0.0;  // dNLL/dsigma
  double d_mu = 0.0;     // dNLL/dmu
  double d_xi_raw = 0.0;     // chain: d_xi * (1 - xi^2)
  double d_sigma_raw = 0.0;  // chain: d_sigma * sigma
  bool clamped = false;  // support expression below kSupportClamp (value side)
  bool floored = false;  // gradients evaluated at kGradientFloor, not at s
};

// `clamp` selects training semantics: the support expression is clamped to
// kSupportClamp and the item contributes the boundary likelihood, with
// `clamped` set. Gradients are the exact derivatives wherever the support
// expression is at least kGradientFloor; closer to the boundary they are the
// derivatives evaluated *at* kGradientFloor (`floored` set). That keeps the
// two failure modes of the naive conventions out:
//   - exact derivatives at the boundary carry a 1/kSupportClamp factor in
//     d_mu/d_sigma, and one descent step throws the raw parameters out of
//     floating-point range;
//   - derivatives of the pinned boundary value (flat in the support
//     expression) have d_mu = 0 and d_sigma = 1/sigma, which turns the
//     clamped region into a one-way ratchet: with xi < 0 the boundary term
//     rewards xi -> -1 and sigma -> 0 while nothing pulls mu back, and whole
//     batches collapse into that corner.
// Evaluating at the floor keeps the true restoring direction — off-support
// items push mu/sigma/xi back toward covering the observation — at a
// magnitude an ordinary learning rate absorbs.
// With clamp=false (evaluation semantics) no clamp and no floor apply: an
// on-support item gets the exact likelihood and exact derivatives, and an
// off-support item yields nll=+inf with zero gradients.
inline GevGrad gev_nll_grad(double z, const GevParams& p, bool clamp = true) {
  check_params(p);
  GevGrad g;
  const double y = (z - p.mu) / p.sigma;
  if (std::fabs(p.xi) < kXiEps) {
    const double emy = std::exp(-y);
    g.nll = std::log(p.sigma) + y + emy;
    g.d_mu = (emy - 1.0) / p.sigma;
    g.d_sigma = (1.0 - y + y * emy) / p.sigma;
    g.d_xi = 0.0;
  } else {
    const double xi = p.xi;
    const double t = xi * y;
    const double s = 1.0 + t;
    if (s < kSupportClamp && !clamp) {
      g.nll = kInf;
      return g;
    }
    g.clamped = s < kSupportClamp;
    const double log_s = g.clamped ? std::log(kSupportClamp) : std::log1p(t);
    const double pow_term = std::exp(-log_s / xi);  // s^(-1/xi), clamped value
    g.nll = std::log(p.sigma) + (1.0 + 1.0 / xi) * log_s + pow_term;
    g.floored = clamp && s < kGradientFloor;
    // Gradient-side support expression and the quantities derived from it.
    // Off the floor (and always with clamp=false) these equal the value-side
    // ones and the derivatives are exact; on the floor they are the
    // derivatives evaluated at the floor.
    const double sg = g.floored ? kGradientFloor : s;
    const double tg = g.floored ? kGradientFloor - 1.0 : t;
    const double yg = tg / xi;
    const double log_sg = g.floored ? std::log(kGradientFloor) : log_s;
    const double pow_g = g.floored ? std::exp(-log_sg / xi) : pow_term;
    g.d_mu = (pow_g / sg - (1.0 + xi) / sg) / p.sigma;
    g.d_sigma =
        (1.0 - (1.0 + 1.0 / xi) * tg / sg + (tg / xi) * pow_g / sg) / p.sigma;
    g.d_xi = -(log_sg / (xi * xi)) + (1.0 + 1.0 / xi) * yg / sg +
             pow_g * (log_sg / (xi * xi) - yg / (xi * sg));
  }
  g.d_xi_raw = g.d_xi * (1.0 - p.xi * p.xi);
  g.d_sigma_raw = g.d_sigma * p.sigma;
  return g;
}

struct NllBatch {
  double total = 0.0;
  bool any_clamped = false;
  std::vector<GevGrad> items;
};

// Batch NLL (sum over items) with per-item parameters.
inline NllBatch nll_and_grads(std::span<const double> z,
                              std::span<const GevParams> params,
                              bool clamp = true) {
  if (z.size() != params.size()) {
    throw std::invalid_argument("z / parameter batch size mismatch");
  }
  NllBatch out;
  out.items.reserve(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.items.push_back(gev_nll_grad(z[i], params[i], clamp));
    out.total += out.items.back().nll;
    out.any_clamped = out.any_clamped || out.items.back().clamped;
  }
  return out;
}

inline NllBatch nll_and_grads(std::span<const double> z,
                              std::span<const RawGevParams> raw,
                              bool clamp = true) {
  std::vector<GevParams> params;
  params.reserve(raw.size());
  for (const auto& r : raw) params.push_back(transform_raw(r));
  return nll_and_grads(z, std::span<const GevParams>(params), clamp);
}

namespace detail {

inline double simpson_rule(double fa, double fm, double fb, double a, double b) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson_rec(const std::function<double(double)>& f, double a,
                                   double b, double fa, double fm, double fb,
                                   double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson_rule(fa, flm, fm, a, m);
  const double right = simpson_rule(fm, frm, fb, m, b);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a,
                               double b, double tol) {
  if (!(b > a)) return 0.0;
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = simpson_rule(fa, fm, fb, a, b);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, 52);
}

}  // namespace detail

// Continuous ranked probability score of the distribution against outcome y:
// integral of (F(x) - 1{x >= y})^2 over the effective support, by adaptive
// quadrature split at the integrand's kink in y. Absolute tolerance ~1e-6.
inline double crps(const GevParams& p, double y) {
  check_params(p);
  if (!std::isfinite(y)) throw std::invalid_argument("CRPS outcome must be finite");
  const double lo = std::min(gev_quantile(p, 1e-8), y);
  const double hi = std::max(gev_quantile(p, 1.0 - 1e-8), y);
  const auto below = [&](double x) {
    const double F = gev_cdf(p, x);
    return F * F;
  };
  const auto above = [&](double x) {
    const double F = 1.0 - gev_cdf(p, x);
    return F * F;
  };
  return detail::adaptive_simpson(below, lo, y, 5e-7) +
         detail::adaptive_simpson(above, y, hi, 5e-7);
}

inline double mean_crps(std::span<const double> z, std::span<const GevParams> params) {
  if (z.size() != params.size() || z.empty()) {
    throw std::invalid_argument("CRPS batch requires matching non-empty inputs");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) acc += crps(params[i], z[i]);
  return acc / static_cast<double>(z.size());
}

// Maximum likelihood fit of a single GEV to pooled events by monotone gradient
// descent on the raw parameterization. `lr` scales the per-event mean gradient;
// a rejected step halves the rate, an accepted one grows it back toward `lr`.
// Initialization is moment based (Gumbel moment matching for the scale).
// Converged when an accepted step changes the summed NLL by less than 1e-8.
// A non-finite loss restarts the fit with the rate halved, up to 5 times.
inline GevParams fit_stationary(std::span<const double> events, double lr = 0.05,
                                int max_iters = 5000, std::uint64_t seed = 0) {
  (void)seed;  // descent is deterministic; kept for interface stability
  if (events.size() < 10) {
    throw std::invalid_argument("stationary fit requires at least 10 events");
  }
  if (!(lr > 0.0) || max_iters <= 0) {
    throw std::invalid_argument("invalid optimizer settings");
  }
  const double n = static_cast<double>(events.size());
  double mean = 0.0;
  for (const double z : events) mean += z;
  mean /= n;
  double var = 0.0;
  for (const double z : events) var += (z - mean) * (z - mean);
  var /= n;
  const double sd = std::max(std::sqrt(var), 1e-6);

  RawGevParams init;
  init.mu_raw = mean;
  init.sigma_raw = std::log(sd * std::sqrt(6.0) / 3.14159265358979323846);
  // Start the shape slightly off zero: exactly at zero the Gumbel branch pins
  // d_xi to 0 and gradient descent could never move it.
  init.xi_raw = 0.1;

  const auto eval = [&](const RawGevParams& r, double grad[3]) {
    const GevParams p = transform_raw(r);
    double total = 0.0;
    double gx = 0.0, gs = 0.0, gm = 0.0;
    for (const double z : events) {
      const GevGrad g = gev_nll_grad(z, p, /*clamp=*/true);
      total += g.nll;
      gx += g.d_xi_raw;
      gs += g.d_sigma_raw;
      gm += g.d_mu;
    }
    grad[0] = gx / n;
    grad[1] = gs / n;
    grad[2] = gm / n;
    return total;
  };

  for (int attempt = 0; attempt <= 5; ++attempt) {
    RawGevParams r = init;
    double rate = lr / static_cast<double>(1 << attempt);
    double grad[3];
    double loss = eval(r, grad);
    if (!std::isfinite(loss)) continue;
    bool diverged = false;
    for (int iter = 0; iter < max_iters; ++iter) {
      const RawGevParams trial{r.xi_raw - rate * grad[0], r.sigma_raw - rate * grad[1],
                               r.mu_raw - rate * grad[2]};
      double trial_grad[3];
      const double trial_loss = eval(trial, trial_grad);
      if (!std::isfinite(trial_loss)) {
        diverged = true;
        break;
      }
      if (trial_loss > loss) {
        rate *= 0.5;
        if (rate < 1e-18) break;
        continue;
      }
      const double drop = loss - trial_loss;
      r = trial;
      loss = trial_loss;
      grad[0] = trial_grad[0];
      grad[1] = trial_grad[1];
      grad[2] = trial_grad[2];
      rate = std::min(rate * 1.25, lr);
      if (drop < 1e-8) break;
    }
    if (!diverged) return transform_raw(r);
  }
  throw numerical_error("stationary GEV fit diverged after retries");
}

inline void to_json(nlohmann::json& j, const GevParams& p) {
  j = nlohmann::json{{"xi", p.xi}, {"sigma", p.sigma}, {"mu", p.mu}};
}

inline void from_json(const nlohmann::json& j, GevParams& p) {
  j.at("xi").get_to(p.xi);
  j.at("sigma").get_to(p.sigma);
  j.at("mu").get_to(p.mu);
}

}  // namespace nsbm
