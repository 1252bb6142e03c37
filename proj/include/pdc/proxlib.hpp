#pragma once

// Extended proximal operators argmin_x h(x) + (1/2 tau) ||x - y||_D^2 and the
// three notions of an inexact prox point:
//
//   type-0 at eps:  ||z - zbar||_D <= sqrt(2 tau eps)
//   type-1 at eps:  G_y(z) <= min G_y + eps
//   type-2 at eps:  (1/tau) D (y - z) is an eps-subgradient of h at z
//
// with type-2 => type-1 => type-0.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pdc/operators.hpp"

namespace pdc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
/// Additive slack for evaluated eps-subdifferential inequalities.
inline constexpr double kSubgradientTol = 1e-10;

enum class ProxTag { l1_norm, inf_ball_indicator, linear_plus_l1, custom };

/// Convex h: R^n -> R u {+inf}. The closed-form members are
///   l1_norm:            w ||x||_1
///   inf_ball_indicator: indicator of { ||x||_inf <= radius }
///   linear_plus_l1:     <c, x> + w ||x||_1
/// and `custom` only knows how to evaluate itself.
struct ConvexFunction {
  ProxTag tag = ProxTag::l1_norm;
  double weight = 1.0;
  double radius = 1.0;
  Vec linear;
  std::function<double(const Vec&)> custom_eval;

  static ConvexFunction l1(double w = 1.0) { return {ProxTag::l1_norm, w, 1.0, {}, {}}; }
  static ConvexFunction inf_ball(double radius) {
    return {ProxTag::inf_ball_indicator, 1.0, radius, {}, {}};
  }
  static ConvexFunction linear_plus_l1(Vec c, double w = 1.0) {
    return {ProxTag::linear_plus_l1, w, 1.0, std::move(c), {}};
  }
  static ConvexFunction custom(std::function<double(const Vec&)> f) {
    return {ProxTag::custom, 1.0, 1.0, {}, std::move(f)};
  }

  double operator()(const Vec& x) const {
    switch (tag) {
      case ProxTag::l1_norm:
        return weight * x.lpNorm<1>();
      case ProxTag::inf_ball_indicator:
        return x.lpNorm<Eigen::Infinity>() <= radius * (1.0 + 1e-12) ? 0.0 : kInf;
      case ProxTag::linear_plus_l1:
        require_dim(x.size(), linear.size(), "linear_plus_l1");
        return linear.dot(x) + weight * x.lpNorm<1>();
      case ProxTag::custom:
        return custom_eval(x);
    }
    return kInf;
  }

  bool has_conjugate() const { return tag != ProxTag::custom; }

  /// Fenchel conjugate h*(p) for the closed-form tags. Feasibility of the
  /// dual-ball constraints is tested with kSubgradientTol slack.
  double conjugate(const Vec& p) const {
    switch (tag) {
      case ProxTag::l1_norm:
        return p.lpNorm<Eigen::Infinity>() <= weight + kSubgradientTol ? 0.0 : kInf;
      case ProxTag::linear_plus_l1:
        return (p - linear).lpNorm<Eigen::Infinity>() <= weight + kSubgradientTol ? 0.0 : kInf;
      case ProxTag::inf_ball_indicator:
        return radius * p.lpNorm<1>();
      case ProxTag::custom:
        break;
    }
    throw Error(ErrorCode::not_separable, "custom function has no closed-form conjugate");
  }
};

/// G_y(x) = h(x) + (1/2 tau) ||x - y||_D^2
struct ProxProblem {
  ConvexFunction h;
  double tau = 1.0;
  Metric d;
  Vec y;

  void validate() const {
    require(tau > 0.0, ErrorCode::contract_violation, "prox tau must be positive");
    require_dim(y.size(), d.dim(), "ProxProblem center");
  }

  double objective(const Vec& x) const {
    require_dim(x.size(), d.dim(), "ProxProblem::objective");
    const double hv = h(x);
    if (!std::isfinite(hv)) return kInf;
    const Vec diff = x - y;
    return hv + diff.dot(d.apply(diff)) / (2.0 * tau);
  }

  /// The slope (1/tau) D (y - z) that type-2 tests against the eps-subdifferential.
  Vec slope(const Vec& z) const { return d.apply(y - z) / tau; }
};

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline Vec clamp(const Vec& x, double lo, double hi) { return x.cwiseMax(lo).cwiseMin(hi); }

/// Exact prox for diagonal D and the separable tags.
inline Vec exact_prox_separable(const ProxProblem& p) {
  p.validate();
  if (!p.d.is_diagonal())
    throw Error(ErrorCode::not_separable, "closed-form prox needs a diagonal metric");
  const Vec& dd = p.d.diagonal_entries();
  const Index n = p.y.size();
  Vec z(n);
  switch (p.h.tag) {
    case ProxTag::l1_norm:
      for (Index i = 0; i < n; ++i) z[i] = soft_threshold(p.y[i], p.tau * p.h.weight / dd[i]);
      return z;
    case ProxTag::linear_plus_l1:
      require_dim(p.h.linear.size(), n, "linear_plus_l1 prox");
      for (Index i = 0; i < n; ++i)
        z[i] = soft_threshold(p.y[i] - p.tau * p.h.linear[i] / dd[i], p.tau * p.h.weight / dd[i]);
      return z;
    case ProxTag::inf_ball_indicator:
      return clamp(p.y, -p.h.radius, p.h.radius);
    case ProxTag::custom:
      break;
  }
  throw Error(ErrorCode::not_separable, "no closed-form prox for custom h");
}

inline bool check_type0(const Vec& z, const Vec& z_exact, double tau, double eps, const Metric& d) {
  require_dim(z.size(), z_exact.size(), "check_type0");
  return metric_norm(z - z_exact, d) <= std::sqrt(2.0 * tau * eps) + 1e-12;
}

/// Sampled necessary condition for type-2: h(x) >= h(z) + <p, x - z> - eps at
/// every probe. `false` proves z is not a type-2 point; `true` is evidence.
inline bool check_type2_necessary(const Vec& z, const ProxProblem& p, double eps,
                                  const std::vector<Vec>& probes) {
  p.validate();
  const double hz = p.h(z);
  if (!std::isfinite(hz)) return false;
  const Vec slope = p.slope(z);
  bool ok = true;
  for (const auto& x : probes) {
    const double hx = p.h(x);
    if (!std::isfinite(hx)) throw Error(ErrorCode::invalid_probe, "probe outside dom h");
    if (hx < hz + slope.dot(x - z) - eps - kSubgradientTol) ok = false;
  }
  return ok;
}

/// Smallest eps with (1/tau) D (y - z) in the eps-subdifferential of h at z,
/// i.e. the Fenchel-Young gap h(z) + h*(p) - <p, z>. Exact for the
/// closed-form tags; +inf when p is outside dom h* or z outside dom h.
inline double type2_epsilon(const Vec& z, const ProxProblem& p) {
  p.validate();
  const double hz = p.h(z);
  if (!std::isfinite(hz)) return kInf;
  const Vec slope = p.slope(z);
  const double hc = p.h.conjugate(slope);
  if (!std::isfinite(hc)) return kInf;
  return std::max(0.0, hz + hc - slope.dot(z));
}

inline bool check_type1_via_gap(const Vec& z, const ProxProblem& p, double eps,
                                double reference_min) {
  return p.objective(z) <= reference_min + eps + 1e-12;
}

/// 32 probes: anchor, prox center, and anchor +/- s e_i for s in
/// {1e-3, 1e-1, 1} at five coordinates spread over the vector. Probes that
/// leave dom h are pulled back onto the ball for indicators.
inline std::vector<Vec> default_probes(const ProxProblem& p, const Vec& anchor) {
  std::vector<Vec> probes;
  probes.reserve(32);
  auto fit = [&](Vec x) {
    if (p.h.tag == ProxTag::inf_ball_indicator) x = clamp(x, -p.h.radius, p.h.radius);
    return x;
  };
  probes.push_back(fit(anchor));
  probes.push_back(fit(p.y));
  const Index n = anchor.size();
  for (int j = 0; j < 5; ++j) {
    const Index i = (static_cast<Index>(j) * n) / 5;
    for (double s : {1e-3, 1e-1, 1.0}) {
      for (double sign : {1.0, -1.0}) {
        Vec x = anchor;
        x[i] += sign * s;
        probes.push_back(fit(std::move(x)));
      }
    }
  }
  return probes;
}

struct CertificateReport {
  bool type0 = false;
  bool type1 = false;
  bool type2 = false;        // exact (Fenchel-Young) membership
  bool type2_probes = false; // sampled necessary condition
  double type2_eps = 0.0;    // smallest eps certifying type-2
  double objective_gap = 0.0;
  double distance = 0.0;     // ||z - zbar||_D
  /// No instance where a stronger notion holds and a weaker one fails.
  bool chain_consistent() const {
    return (!type2 || type1) && (!type1 || type0) && (!type2 || type2_probes);
  }
};

inline CertificateReport certificate_chain_check(const Vec& z, const ProxProblem& p, double eps) {
  const Vec zbar = exact_prox_separable(p);
  CertificateReport r;
  r.distance = metric_norm(z - zbar, p.d);
  r.objective_gap = p.objective(z) - p.objective(zbar);
  r.type0 = check_type0(z, zbar, p.tau, eps, p.d);
  r.type1 = check_type1_via_gap(z, p, eps, p.objective(zbar));
  r.type2_eps = type2_epsilon(z, p);
  r.type2 = r.type2_eps <= eps + kSubgradientTol;
  r.type2_probes = check_type2_necessary(z, p, eps, default_probes(p, zbar));
  return r;
}

// ---------------------------------------------------------------------------
// Deliberately inexact prox points (known eps by construction)

struct InexactPoint {
  Vec z;
  double objective_gap = 0.0;  // G_y(z) - min G_y, i.e. the type-1 eps
  int iterations = 0;
};

/// Early-stopped subgradient descent on G_y from x0 with steps step0/sqrt(k+1).
/// Requires a closed-form prox (for the recorded gap) and finite h everywhere
/// along the path (l1 / linear_plus_l1).
inline InexactPoint inexact_prox_by_subgradient(const ProxProblem& p, Vec x0, int iterations,
                                                double step0) {
  require(p.h.tag == ProxTag::l1_norm || p.h.tag == ProxTag::linear_plus_l1,
          ErrorCode::not_separable, "subgradient generator needs a finite separable h");
  const double fmin = p.objective(exact_prox_separable(p));
  Vec x = std::move(x0);
  Vec best = x;
  double fbest = p.objective(x);
  for (int k = 0; k < iterations; ++k) {
    Vec g = p.d.apply(x - p.y) / p.tau;
    for (Index i = 0; i < x.size(); ++i) {
      const double s = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0);
      g[i] += p.h.weight * s;
    }
    if (p.h.tag == ProxTag::linear_plus_l1) g += p.h.linear;
    const double gn = g.norm();
    if (gn == 0.0) break;
    x -= (step0 / std::sqrt(k + 1.0)) * g / gn;
    const double fx = p.objective(x);
    if (fx < fbest) {
      fbest = fx;
      best = x;
    }
  }
  return {best, std::max(0.0, fbest - fmin), iterations};
}

/// Moves from `exact` along `direction` as far as an eps-budget allows:
/// returns exact + t*direction with the largest t in [0, t_max] such that
/// `eps_of(point) <= budget` (bisection; eps_of must be nondecreasing in t,
/// which holds for Fenchel-Young gaps along a ray from the exact prox).
inline Vec perturb_within_budget(const Vec& exact, const Vec& direction, double budget,
                                 const std::function<double(const Vec&)>& eps_of,
                                 double t_max = 1.0, int bisection_steps = 60) {
  if (budget <= 0.0 || direction.norm() == 0.0) return exact;
  if (eps_of(exact + t_max * direction) <= budget) return exact + t_max * direction;
  double lo = 0.0, hi = t_max;
  for (int i = 0; i < bisection_steps; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (eps_of(exact + mid * direction) <= budget)
      lo = mid;
    else
      hi = mid;
  }
  return exact + lo * direction;
}

/// Right side of the distance bound between a type-2 point z1 (center
/// z0 - D^{-1}u) and a type-1 point z2 (center z0 - D^{-1}v), both at eps:
///   1/2 ( s + d + sqrt(d^2 + 10 tau eps + 2 s d) ),  s = sqrt(2 tau eps),
/// with d = ||u - v||_{D^{-1}}.
inline double paired_prox_distance_bound(double tau, double eps, double uv_dist_dinv) {
  const double s = std::sqrt(2.0 * tau * eps);
  const double d = uv_dist_dinv;
  return 0.5 * (s + d + std::sqrt(d * d + 10.0 * tau * eps + 2.0 * s * d));
}

}  // namespace pdc
