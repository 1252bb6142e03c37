#pragma once

// Small saddle problems with known solutions, for tests and rate checks.

#include <cmath>
#include <memory>

#include "pdc/pdcore.hpp"
#include "pdc/proxlib.hpp"

namespace pdc {

struct ToyProblem {
  SaddleProblem problem;
  Vec x_star;
  Vec y_star;
};

/// f = 0, g = indicator of [-1, 1], A = 1, S = R = 1. Saddle point (0, 0).
inline ToyProblem scalar_toy() {
  ToyProblem t;
  auto& p = t.problem;
  p.a = LinearMap::identity(1);
  p.s = Metric::identity(1);
  p.r = Metric::identity(1);
  p.f = [](const Vec&) { return 0.0; };
  p.g = [](const Vec& y) { return std::abs(y[0]) <= 1.0 ? 0.0 : kInf; };
  p.g_prox = [](const Vec& c, double, const Metric&, double) -> ProxResult {
    return {clamp(c, -1.0, 1.0), 0.0, 0};
  };
  // argmin_x x*y + 1/(2 lambda) (x - x_prev)^2 with A^T R A = 1
  p.x_step = [](const XStepRequest& rq) -> ProxResult {
    return {rq.x_prev - rq.lambda * rq.y, 0.0, 0};
  };
  p.f_prox_euclid = [](const Vec& c, double) { return c; };
  t.x_star = Vec::Zero(1);
  t.y_star = Vec::Zero(1);
  return t;
}

struct QuadraticToyOptions {
  /// Oracles return the worst point the requested tolerance allows, pushed
  /// along a fixed direction; otherwise they are exact.
  bool adversarial = false;
  Metric s = Metric::identity(2, 1.25);
  Metric r = Metric::identity(2);
};

/// f(x) = (rho/2)||x - a||^2, g(y) = (sigma/2)||y||^2 + <b, y> + indicator of
/// the unit box, A = [[1, 0.5], [0, 1]], rho = sigma = 1. The saddle point is
/// interior to the box.
inline ToyProblem quadratic_toy(const QuadraticToyOptions& opt = {}) {
  Mat am(2, 2);
  am << 1.0, 0.5, 0.0, 1.0;
  const Vec a = (Vec(2) << 1.0, -0.5).finished();
  const Vec b = (Vec(2) << 0.2, -0.1).finished();
  const double rho = 1.0, sigma = 1.0;

  ToyProblem t;
  auto& p = t.problem;
  p.a = LinearMap::from_dense(am);
  p.s = opt.s;
  p.r = opt.r;
  p.f = [a, rho](const Vec& x) { return 0.5 * rho * (x - a).squaredNorm(); };
  const auto g = [b, sigma](const Vec& y) {
    if (y.cwiseAbs().maxCoeff() > 1.0 + 1e-15) return kInf;
    return 0.5 * sigma * y.squaredNorm() + b.dot(y);
  };
  p.g = g;
  const auto g_conj = [b, sigma](const Vec& q) {
    double v = 0.0;
    for (Index i = 0; i < q.size(); ++i) {
      const double w = q[i] - b[i];
      const double y = std::clamp(w / sigma, -1.0, 1.0);
      v += w * y - 0.5 * sigma * y * y;
    }
    return v;
  };
  const auto f_conj = [a, rho](const Vec& q) { return q.dot(a) + q.squaredNorm() / (2.0 * rho); };
  const Vec dir = Vec::Ones(2).normalized();
  const bool adversarial = opt.adversarial;

  p.g_prox = [g, g_conj, b, sigma, dir, adversarial](const Vec& c, double tau, const Metric& s,
                                                     double tol) -> ProxResult {
    require(s.is_diagonal(), ErrorCode::contract_violation, "toy needs a diagonal S");
    const Vec sd = s.diagonal_entries();
    Vec y(c.size());
    for (Index i = 0; i < c.size(); ++i)
      y[i] = std::clamp((sd[i] * c[i] / tau - b[i]) / (sigma + sd[i] / tau), -1.0, 1.0);
    const auto eps_of = [&](const Vec& z) {
      const double gz = g(z);
      if (!std::isfinite(gz)) return kInf;
      const Vec q = sd.cwiseProduct(c - z) / tau;
      return gz + g_conj(q) - q.dot(z);
    };
    if (!adversarial || tol <= 0.0) return {y, 0.0, 0};
    Vec z = perturb_within_budget(y, dir, tol, eps_of);
    return {z, std::max(0.0, eps_of(z)), 0};
  };

  p.x_step = [am, a, rho, f_conj, dir, adversarial, r = opt.r](const XStepRequest& rq)
      -> ProxResult {
    Mat rd(2, 2);
    rd = Mat::Zero(2, 2);
    for (Index i = 0; i < 2; ++i) {
      Vec e = Vec::Zero(2);
      e[i] = 1.0;
      rd.col(i) = r.apply(e);
    }
    const Mat m = am.transpose() * rd * am;
    const Mat h = rho * Mat::Identity(2, 2) + m / rq.lambda;
    const Vec rhs = rho * a - am.transpose() * rq.y + m * rq.x_prev / rq.lambda;
    const Vec x = h.ldlt().solve(rhs);
    if (!adversarial || rq.tolerance <= 0.0) return {x, 0.0, 0};
    const auto eps_of = [&](const Vec& z) {
      const Vec q = m * (rq.x_prev - z) / rq.lambda - am.transpose() * rq.y;
      return 0.5 * rho * (z - a).squaredNorm() + f_conj(q) - q.dot(z);
    };
    Vec z = perturb_within_budget(x, h.ldlt().solve(dir), rq.tolerance, eps_of, 1e3);
    return {z, std::max(0.0, eps_of(z)), 0};
  };
  p.f_prox_euclid = [a, rho](const Vec& c, double tau) -> Vec {
    return (c + tau * rho * a) / (1.0 + tau * rho);
  };

  // Interior saddle: rho(x - a) + A^T y = 0, A x - sigma y - b = 0.
  Mat kkt = Mat::Zero(4, 4);
  kkt.topLeftCorner(2, 2) = rho * Mat::Identity(2, 2);
  kkt.topRightCorner(2, 2) = am.transpose();
  kkt.bottomLeftCorner(2, 2) = am;
  kkt.bottomRightCorner(2, 2) = -sigma * Mat::Identity(2, 2);
  Vec rhs(4);
  rhs << rho * a, b;
  const Vec sol = kkt.fullPivLu().solve(rhs);
  t.x_star = sol.head(2);
  t.y_star = sol.tail(2);
  return t;
}

}  // namespace pdc
