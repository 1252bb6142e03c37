#pragma once

// Outer primal-dual iterations for min_x max_y L(x,y) = f(x) + <Ax,y> - g(y):
//
//   y^{k+1}    ~2  prox of tau_k g in S at ybar^k + tau_k S^{-1} A x^k     (eps/2)
//   x^{k+1}    ~2  argmin_x L(x, y^{k+1}) + 1/(2 lambda_k) ||A(x - x^k)||_R^2 (delta)
//   ybar^{k+1} ~1  prox of tau_k g in S at ybar^k + tau_k S^{-1} A x^{k+1} (eps/2)
//
// plus the exact and block-metric special cases and a classical PDHG baseline.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pdc/operators.hpp"

namespace pdc {

struct ProxResult {
  Vec point;
  double achieved_eps = 0.0;
  long inner_iterations = 0;
};

struct XStepRequest {
  const Vec& x_prev;
  const Vec& y;
  double lambda;
  double tolerance;
};

/// Oracles and data of a saddle problem. The oracles receive the requested
/// tolerance (0 = exact mode) and report the precision they certified.
struct SaddleProblem {
  using GProx = std::function<ProxResult(const Vec& center, double tau, const Metric& s, double tol)>;
  using XStep = std::function<ProxResult(const XStepRequest&)>;
  using Eval = std::function<double(const Vec&)>;

  LinearMap a;
  Metric s;  // dual metric on Y
  Metric r;  // primal-step metric on Y, enters as A^T R A
  Eval f;
  Eval g;
  GProx g_prox;
  XStep x_step;
  /// Euclidean prox of tau*f, only needed by the PDHG baseline.
  std::function<Vec(const Vec& center, double tau)> f_prox_euclid;
  /// Objective reported per iteration; defaults to L(x, y) when empty.
  Eval primal_objective;

  double lagrangian(const Vec& x, const Vec& y) const { return f(x) + a.apply(x).dot(y) - g(y); }
};

/// x^k - lambda (A^T R A)^{-1} A^T y: the center of the x-subproblem in the
/// A^T R A metric.
inline Vec x_step_center(const Metric& normal_metric, const LinearMap& a, const Vec& x_prev,
                         const Vec& y, double lambda) {
  return x_prev - lambda * normal_metric.inverse_apply(a.adjoint(y));
}

// ---------------------------------------------------------------------------
// Schedules

struct StepSequence {
  std::function<double(long)> value = [](long) { return 1.0; };
  double supremum = 1.0;

  static StepSequence constant(double v) {
    return {[v](long) { return v; }, v};
  }
  double operator()(long k) const { return value(k); }
};

/// eps_n = c_eps n^-(alpha+1/2), delta_n = c_delta n^-(alpha+1/2), n >= 1.
struct ToleranceSchedule {
  double alpha = 1.0;
  double c_eps = 1.0;
  double c_delta = 1.0;
  StepSequence tau;
  StepSequence lambda;

  static ToleranceSchedule exact(StepSequence tau = {}, StepSequence lambda = {}) {
    return {1.0, 0.0, 0.0, std::move(tau), std::move(lambda)};
  }

  double eps(long n) const { return c_eps == 0.0 ? 0.0 : c_eps * std::pow(double(n), -(alpha + 0.5)); }
  double delta(long n) const {
    return c_delta == 0.0 ? 0.0 : c_delta * std::pow(double(n), -(alpha + 0.5));
  }

  /// Checks positivity and monotonicity of the step sequences over a prefix,
  /// and the step condition at the declared suprema.
  void validate(const Metric& r, const Metric& s, long horizon = 1000) const {
    require(alpha > 0.0, ErrorCode::configuration, "alpha must be positive");
    require(c_eps >= 0.0 && c_delta >= 0.0, ErrorCode::configuration,
            "tolerance constants must be nonnegative");
    for (const auto* seq : {&tau, &lambda}) {
      double prev = 0.0;
      for (long k = 0; k <= horizon; ++k) {
        const double v = (*seq)(k);
        require(v > 0.0 && std::isfinite(v), ErrorCode::configuration, "step must be positive");
        require(v >= prev, ErrorCode::configuration, "step sequence must be nondecreasing");
        require(v <= seq->supremum * (1 + 1e-12), ErrorCode::configuration,
                "step sequence exceeds its declared supremum");
        prev = v;
      }
    }
    if (!check_step_condition(r, s, tau.supremum, lambda.supremum))
      throw Error(ErrorCode::configuration, "R - tau*lambda*S^{-1} is not positive definite");
  }
};

// ---------------------------------------------------------------------------
// State

struct SolverState {
  Vec x;
  Vec y;
  Vec y_bar;
  long k = 0;
  Vec ergodic_x_sum;
  Vec ergodic_y_sum;
  double a_sum = 0.0;     // sum_k sqrt(eps_{k+1} / tau_k)
  double b_sum = 0.0;     // sum_k (2 eps_{k+1} + delta_{k+1})
  double a_ledger = 0.0;  // A_N = tau_N * a_sum
  double b_ledger = 0.0;  // B_N = tau_N * b_sum
  long inner_iteration_total = 0;
  long last_inner_iterations = 0;
  double last_eps = 0.0;
  double last_delta = 0.0;

  static SolverState initial(Vec x0, Vec y_bar0) {
    SolverState st;
    st.ergodic_x_sum = Vec::Zero(x0.size());
    st.ergodic_y_sum = Vec::Zero(y_bar0.size());
    st.x = std::move(x0);
    st.y = y_bar0;
    st.y_bar = std::move(y_bar0);
    return st;
  }
};

namespace detail {

inline void check_budget(const ProxResult& r, double tol, const char* which) {
  if (tol > 0.0 && !(r.achieved_eps <= tol * (1.0 + 1e-9) + 1e-300))
    throw Error(ErrorCode::inexactness_budget_exceeded,
                std::string(which) + " oracle certified " + std::to_string(r.achieved_eps) +
                    " > " + std::to_string(tol),
                r.achieved_eps);
}

inline SolverState outer_step(const SaddleProblem& p, SolverState st, double tau, double lambda,
                              double tau_next, double eps, double delta, bool verify_steps) {
  if (verify_steps && !check_step_condition(p.r, p.s, tau, lambda))
    throw Error(ErrorCode::configuration, "R - tau*lambda*S^{-1} is not positive definite");

  const Vec center_y = st.y_bar + tau * p.s.inverse_apply(p.a.apply(st.x));
  ProxResult y_new = p.g_prox(center_y, tau, p.s, eps / 2);
  check_budget(y_new, eps / 2, "dual");

  ProxResult x_new = p.x_step({st.x, y_new.point, lambda, delta});
  check_budget(x_new, delta, "primal");

  const Vec center_bar = st.y_bar + tau * p.s.inverse_apply(p.a.apply(x_new.point));
  ProxResult y_bar_new = p.g_prox(center_bar, tau, p.s, eps / 2);
  check_budget(y_bar_new, eps / 2, "correction");

  st.x = std::move(x_new.point);
  st.y = std::move(y_new.point);
  st.y_bar = std::move(y_bar_new.point);
  st.k += 1;
  st.ergodic_x_sum += st.x;
  st.ergodic_y_sum += st.y;
  st.a_sum += std::sqrt(eps / tau);
  st.b_sum += 2.0 * eps + delta;
  st.a_ledger = tau_next * st.a_sum;
  st.b_ledger = tau_next * st.b_sum;
  st.last_inner_iterations =
      x_new.inner_iterations + y_new.inner_iterations + y_bar_new.inner_iterations;
  st.inner_iteration_total += st.last_inner_iterations;
  st.last_eps = eps;
  st.last_delta = delta;
  return st;
}

}  // namespace detail

/// One step of the inexact method with the scheduled tolerances
/// eps_{k+1}, delta_{k+1}.
inline SolverState outer_step_inexact(const SaddleProblem& p, SolverState st,
                                      const ToleranceSchedule& sched, bool verify_steps = true) {
  const long k = st.k;
  return detail::outer_step(p, std::move(st), sched.tau(k), sched.lambda(k), sched.tau(k + 1),
                            sched.eps(k + 1), sched.delta(k + 1), verify_steps);
}

/// One exact step (eps = delta = 0); ledgers stay zero.
inline SolverState outer_step_exact(const SaddleProblem& p, SolverState st,
                                    const StepSequence& tau = {}, const StepSequence& lambda = {},
                                    bool verify_steps = true) {
  const long k = st.k;
  return detail::outer_step(p, std::move(st), tau(k), lambda(k), tau(k + 1), 0.0, 0.0,
                            verify_steps);
}

struct PdlConfig {
  Metric s;
  Metric r;
  StepSequence tau = StepSequence::constant(1.0);
  StepSequence lambda = StepSequence::constant(1.0);
};

/// Block metrics S = diag(I/s1, I/s2), R = diag(I/r1, I/r2) with unit steps.
/// The step condition then reads 1/r_i - s_i > 0 for each block.
inline PdlConfig make_pdl_config(double r1, double s1, double r2, double s2, Index dim1,
                                 Index dim2) {
  require(r1 > 0 && s1 > 0 && r2 > 0 && s2 > 0, ErrorCode::configuration,
          "PDL parameters must be positive");
  PdlConfig c;
  c.s = Metric::blocks({{{1.0 / s1, dim1}, {1.0 / s2, dim2}}});
  c.r = Metric::blocks({{{1.0 / r1, dim1}, {1.0 / r2, dim2}}});
  return c;
}

inline std::pair<Vec, Vec> ergodic_point(const SolverState& st) {
  if (st.k == 0) throw Error(ErrorCode::empty_average, "no iterates to average");
  return {st.ergodic_x_sum / double(st.k), st.ergodic_y_sum / double(st.k)};
}

/// L(xhat, y*) - L(x*, yhat) at the ergodic point.
inline double ergodic_gap(const SaddleProblem& p, const SolverState& st, const Vec& x_star,
                          const Vec& y_star) {
  const auto [xh, yh] = ergodic_point(st);
  return p.lagrangian(xh, y_star) - p.lagrangian(x_star, yh);
}

/// 1/(2 N tau_N) [ sqrt(tau_N/tau_0) ||y*-ybar0||_S + sqrt(tau_N/lambda_0) ||x*-x0||_{A^T R A}
///                 + 2 A_N + sqrt(2 B_N) ]^2
inline double rate_bound_rhs(const SolverState& st, const ToleranceSchedule& sched,
                             double dist_y0, double dist_x0) {
  if (st.k == 0) throw Error(ErrorCode::undefined_bound, "bound needs N >= 1");
  const double n = double(st.k);
  const double tau_n = sched.tau(st.k);
  const double tau0 = sched.tau(0);
  const double lambda0 = sched.lambda(0);
  const double inner = std::sqrt(tau_n / tau0) * dist_y0 + std::sqrt(tau_n / lambda0) * dist_x0 +
                       2.0 * st.a_ledger + std::sqrt(2.0 * st.b_ledger);
  return inner * inner / (2.0 * n * tau_n);
}

// ---------------------------------------------------------------------------
// Runs

enum class Algorithm { ipdl, pd_exact, pdl, pdhg };

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::ipdl: return "ipdl";
    case Algorithm::pd_exact: return "pd-exact";
    case Algorithm::pdl: return "pdl";
    case Algorithm::pdhg: return "pdhg";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "ipdl") return Algorithm::ipdl;
  if (s == "pd-exact" || s == "pd_exact") return Algorithm::pd_exact;
  if (s == "pdl") return Algorithm::pdl;
  if (s == "pdhg" || s == "cp") return Algorithm::pdhg;
  throw Error(ErrorCode::configuration, "unknown algorithm '" + s + "'");
}

struct StoppingRule {
  long max_iterations = 1000;
  /// Stop once (F(x^k) - F*)/F* < tolerance; needs f_star > 0.
  std::optional<double> relative_objective_tol;
  double f_star = 0.0;
};

struct RunRow {
  long iter = 0;
  double objective = 0.0;
  double gap = std::numeric_limits<double>::quiet_NaN();
  double eps = 0.0;
  double delta = 0.0;
  long inner_iters = 0;
  long cum_inner_iters = 0;
  double wall_ms = 0.0;
  double rel_err = std::numeric_limits<double>::quiet_NaN();
  double bound = std::numeric_limits<double>::quiet_NaN();
};

struct RunRecord {
  std::vector<RunRow> rows;
};

inline constexpr const char* kRunCsvHeader =
    "iter,objective,gap,eps,delta,inner_iters,cum_inner_iters,wall_ms";

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv(const RunRecord& rec) {
  std::ostringstream os;
  os << kRunCsvHeader << '\n';
  char ms[40];
  for (const auto& r : rec.rows) {
    std::snprintf(ms, sizeof ms, "%.3f", r.wall_ms);
    os << r.iter << ',' << format_double(r.objective) << ',' << format_double(r.gap) << ','
       << format_double(r.eps) << ',' << format_double(r.delta) << ',' << r.inner_iters << ','
       << r.cum_inner_iters << ',' << ms << '\n';
  }
  return os.str();
}

inline void write_csv(const RunRecord& rec, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path);
  out << to_csv(rec);
}

struct RunOptions {
  /// When given, the gap column is the ergodic gap against this saddle point.
  std::optional<std::pair<Vec, Vec>> reference_saddle;
  /// (||y* - ybar0||_S, ||x* - x0||_{A^T R A}); enables the per-row bound.
  std::optional<std::pair<double, double>> bound_distances;
  /// PDHG step sizes; 0 means 0.99 / ||A|| with the norm estimated by power iteration.
  double pdhg_tau = 0.0;
  double pdhg_sigma = 0.0;
  double divergence_threshold = 1e12;
  /// Called after each outer iteration.
  std::function<void(const SolverState&)> observer;
};

struct RunResult {
  RunRecord record;
  SolverState state;
};

namespace detail {

inline double objective_of(const SaddleProblem& p, const SolverState& st) {
  return p.primal_objective ? p.primal_objective(st.x) : p.lagrangian(st.x, st.y);
}

inline RunResult run_pdhg(const SaddleProblem& p, SolverState st, const StoppingRule& stop,
                          const RunOptions& opt) {
  require(bool(p.f_prox_euclid), ErrorCode::configuration, "PDHG needs a Euclidean prox of f");
  double tau = opt.pdhg_tau, sigma = opt.pdhg_sigma;
  if (tau <= 0.0 || sigma <= 0.0) {
    const double norm = estimate_norm(p.a);
    tau = sigma = 0.99 / norm;
  }
  const Metric euclid = Metric::identity(p.a.out_dim());
  RunResult out;
  const auto t0 = std::chrono::steady_clock::now();
  for (long it = 0; it < stop.max_iterations; ++it) {
    const Vec x_new = p.f_prox_euclid(st.x - tau * p.a.adjoint(st.y), tau);
    const Vec x_bar = 2.0 * x_new - st.x;
    ProxResult y_new = p.g_prox(st.y + sigma * p.a.apply(x_bar), sigma, euclid, 0.0);
    st.x = x_new;
    st.y = std::move(y_new.point);
    st.y_bar = st.y;
    st.k += 1;
    st.ergodic_x_sum += st.x;
    st.ergodic_y_sum += st.y;

    RunRow row;
    row.iter = st.k;
    row.objective = objective_of(p, st);
    if (!std::isfinite(row.objective) || std::abs(row.objective) > opt.divergence_threshold)
      throw Error(ErrorCode::divergence, "objective " + format_double(row.objective), row.objective);
    if (opt.reference_saddle)
      row.gap = ergodic_gap(p, st, opt.reference_saddle->first, opt.reference_saddle->second);
    if (stop.f_star > 0.0) {
      row.rel_err = (row.objective - stop.f_star) / stop.f_star;
      if (!opt.reference_saddle) row.gap = row.objective - stop.f_star;
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.record.rows.push_back(row);
    if (opt.observer) opt.observer(st);
    if (stop.relative_objective_tol && stop.f_star > 0.0 &&
        row.rel_err < *stop.relative_objective_tol)
      break;
  }
  out.state = std::move(st);
  return out;
}

}  // namespace detail

/// Runs `algo` from `init` until the stopping rule fires.
///
/// ipdl uses `sched` as given; pd_exact zeroes its tolerances; pdl
/// additionally requires block-diagonal S, R and forces unit steps; pdhg is
/// the classical two-step baseline with Euclidean steps.
inline RunResult run_solver(const SaddleProblem& p, Algorithm algo, ToleranceSchedule sched,
                            const StoppingRule& stop, SolverState init,
                            const RunOptions& opt = {}) {
  if (stop.relative_objective_tol)
    require(stop.f_star > 0.0, ErrorCode::configuration,
            "relative-objective stopping needs a positive reference optimum");
  if (algo == Algorithm::pdhg) return detail::run_pdhg(p, std::move(init), stop, opt);

  if (algo == Algorithm::pd_exact || algo == Algorithm::pdl) {
    sched.c_eps = 0.0;
    sched.c_delta = 0.0;
  }
  if (algo == Algorithm::pdl) {
    const auto blockwise = [](const Metric& m) {
      return m.structure() == MetricStructure::block_scaled_identity ||
             m.structure() == MetricStructure::identity_scaled;
    };
    require(blockwise(p.s) && blockwise(p.r), ErrorCode::configuration,
            "pdl needs block-scaled-identity S and R");
    sched.tau = StepSequence::constant(1.0);
    sched.lambda = StepSequence::constant(1.0);
  }
  sched.validate(p.r, p.s);

  RunResult out;
  SolverState st = std::move(init);
  const auto t0 = std::chrono::steady_clock::now();
  for (long it = 0; it < stop.max_iterations; ++it) {
    st = outer_step_inexact(p, std::move(st), sched, /*verify_steps=*/false);
    RunRow row;
    row.iter = st.k;
    row.objective = detail::objective_of(p, st);
    if (!std::isfinite(row.objective) || std::abs(row.objective) > opt.divergence_threshold)
      throw Error(ErrorCode::divergence, "objective " + format_double(row.objective), row.objective);
    row.eps = st.last_eps;
    row.delta = st.last_delta;
    row.inner_iters = st.last_inner_iterations;
    row.cum_inner_iters = st.inner_iteration_total;
    if (opt.reference_saddle)
      row.gap = ergodic_gap(p, st, opt.reference_saddle->first, opt.reference_saddle->second);
    if (opt.bound_distances)
      row.bound = rate_bound_rhs(st, sched, opt.bound_distances->first, opt.bound_distances->second);
    if (stop.f_star > 0.0) {
      row.rel_err = (row.objective - stop.f_star) / stop.f_star;
      if (!opt.reference_saddle) row.gap = row.objective - stop.f_star;
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.record.rows.push_back(row);
    if (opt.observer) opt.observer(st);
    if (stop.relative_objective_tol && stop.f_star > 0.0 &&
        row.rel_err < *stop.relative_objective_tol)
      break;
  }
  out.state = std::move(st);
  return out;
}

}  // namespace pdc
