#pragma once

// Weighted TV prox  min_x ||Dx||_1 + 1/(2 gamma1) ||Bx - xi||^2  solved by
// FISTA on its dual over the box ||w||_inf <= 1, with a certified stopping
// rule on the primal-dual gap.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "pdc/operators.hpp"

namespace pdc {

struct InnerProblem {
  LinearMap b;
  Metric btb;  // B^T B, with inverse
  Vec xi;
  double gamma1 = 0.0;
  LinearMap dgrad;
  Vec bt_xi;
  /// Lipschitz constant of the dual gradient; 0 until estimated.
  double lipschitz = 0.0;

  /// The prox center z = (B^T B)^{-1} B^T xi.
  Vec center() const { return btb.inverse_apply(bt_xi); }

  void validate() const {
    require(gamma1 >= 0.0 && std::isfinite(gamma1), ErrorCode::contract_violation,
            "gamma1 must be nonnegative");
    require_dim(b.out_dim(), xi.size(), "InnerProblem xi");
    require_dim(b.in_dim(), btb.dim(), "InnerProblem BtB");
    require_dim(dgrad.in_dim(), btb.dim(), "InnerProblem D");
    require_dim(bt_xi.size(), btb.dim(), "InnerProblem Bt xi");
  }
};

inline InnerProblem make_inner_problem(LinearMap b, Metric btb, Vec xi, double gamma1,
                                       LinearMap dgrad) {
  InnerProblem ip{std::move(b), std::move(btb), std::move(xi), gamma1, std::move(dgrad), {}, 0.0};
  ip.bt_xi = ip.b.adjoint(ip.xi);
  ip.validate();
  return ip;
}

/// xbar(w) = (B^T B)^{-1} (B^T xi - gamma1 D^T w)
inline Vec recover_primal(const InnerProblem& ip, const Vec& w) {
  require_dim(w.size(), ip.dgrad.out_dim(), "recover_primal");
  if (ip.gamma1 == 0.0) return ip.center();
  return ip.btb.inverse_apply(ip.bt_xi - ip.gamma1 * ip.dgrad.adjoint(w));
}

/// Gradient of (1/2 gamma1) ||gamma1 D^T w - B^T xi||^2_{(B^T B)^{-1}}, i.e. -D xbar(w).
inline Vec dual_gradient(const InnerProblem& ip, const Vec& w) {
  return -ip.dgrad.apply(recover_primal(ip, w));
}

inline double feasibility_violation(const Vec& w) {
  return w.size() == 0 ? 0.0 : w.cwiseAbs().maxCoeff() - 1.0;
}

/// Primal plus dual objective. Evaluated as
///   ||Dx||_1 - <Dx, w> + (1/2 gamma1) ||x - xbar(w)||^2_{B^T B},
/// which is the same quantity without the cancellation of the two quadratics.
inline double duality_gap(const InnerProblem& ip, const Vec& x, const Vec& w) {
  require(ip.gamma1 > 0.0, ErrorCode::contract_violation, "duality gap needs gamma1 > 0");
  if (feasibility_violation(w) > 1e-12)
    throw Error(ErrorCode::infeasible_dual, "dual iterate outside the unit box",
                feasibility_violation(w) + 1.0);
  const Vec dx = ip.dgrad.apply(x);
  const Vec diff = x - recover_primal(ip, w);
  return dx.lpNorm<1>() - dx.dot(w) + ip.btb.inner(diff, diff) / (2.0 * ip.gamma1);
}

/// gamma1 * lambda_max(D (B^T B)^{-1} D^T) by power iteration, times a small
/// safety factor.
inline double estimate_inner_lipschitz(const InnerProblem& ip, int iters = 100,
                                       std::uint64_t seed = 99) {
  if (ip.gamma1 == 0.0) return 0.0;
  const auto op = [&ip](const Vec& w) -> Vec {
    return ip.gamma1 * ip.dgrad.apply(ip.btb.inverse_apply(ip.dgrad.adjoint(w)));
  };
  return 1.01 * estimate_spectral_radius(op, ip.dgrad.out_dim(), iters, seed);
}

struct FistaOptions {
  int gap_every = 5;
  /// When set, receives (iteration, gap) at every gap evaluation.
  std::vector<std::pair<long, double>>* trace = nullptr;
  /// When set, receives every dual iterate after its projection.
  std::function<void(long, const Vec&)> on_iterate;
};

struct FistaResult {
  Vec x;
  Vec w;
  long iterations = 0;
  double gap = 0.0;
};

/// Runs FISTA on the dual until the gap at (xbar(w), w) is at most `delta`,
/// checked at iteration 0 and then every `gap_every` iterations.
inline FistaResult fista_certified_prox(const InnerProblem& ip, double delta,
                                        const std::optional<Vec>& w_warm, long max_iters,
                                        const FistaOptions& opt = {}) {
  require(delta > 0.0, ErrorCode::contract_violation, "delta must be positive");
  require(max_iters > 0, ErrorCode::contract_violation, "max_iters must be positive");
  const Index m = ip.dgrad.out_dim();
  FistaResult res;
  if (ip.gamma1 == 0.0) {
    res.x = ip.center();
    res.w = w_warm ? *w_warm : Vec::Zero(m);
    return res;
  }
  const double lip = ip.lipschitz > 0.0 ? ip.lipschitz : estimate_inner_lipschitz(ip);
  require(lip > 0.0 && std::isfinite(lip), ErrorCode::contract_violation,
          "inner Lipschitz constant must be positive");

  Vec w = w_warm ? Vec(w_warm->cwiseMax(-1.0).cwiseMin(1.0)) : Vec::Zero(m);
  require_dim(w.size(), m, "fista warm start");
  Vec momentum = w;
  double t = 1.0;

  auto evaluate = [&](long it) {
    res.x = recover_primal(ip, w);
    res.w = w;
    res.iterations = it;
    res.gap = duality_gap(ip, res.x, w);
    if (opt.trace) opt.trace->emplace_back(it, res.gap);
    return res.gap <= delta;
  };

  if (evaluate(0)) return res;
  for (long it = 1; it <= max_iters; ++it) {
    const Vec step = momentum + ip.dgrad.apply(recover_primal(ip, momentum)) / lip;
    const Vec w_new = step.cwiseMax(-1.0).cwiseMin(1.0);
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    momentum = w_new + ((t - 1.0) / t_new) * (w_new - w);
    w = w_new;
    t = t_new;
    if (opt.on_iterate) opt.on_iterate(it, w);
    if ((it % opt.gap_every == 0 || it == max_iters) && evaluate(it)) return res;
  }
  throw Error(ErrorCode::inexactness_budget_exceeded,
              "FISTA stopped at gap " + std::to_string(res.gap) + " > " + std::to_string(delta),
              res.gap);
}

}  // namespace pdc
