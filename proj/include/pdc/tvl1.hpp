#pragma once

// TV-L1 deblurring  F(x) = ||Kx - f||_1 + mu ||Dx||_1  written as the saddle
// problem with f-part gamma1 ||Dx||_1, A = [K; gamma2 D] and
// g(u, v) = <f, u> + indicators of the unit box on u and v.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pdc/fft.hpp"
#include "pdc/innersolve.hpp"
#include "pdc/operators.hpp"
#include "pdc/pdcore.hpp"
#include "pdc/proxlib.hpp"

namespace pdc {

enum class Boundary { periodic, neumann };

inline Boundary parse_boundary(const std::string& s) {
  if (s == "periodic") return Boundary::periodic;
  if (s == "neumann") return Boundary::neumann;
  throw Error(ErrorCode::configuration, "unknown boundary '" + s + "'");
}

/// Forward differences, output stacked (horizontal, vertical). Neumann sets
/// the difference across the last column/row to zero.
inline LinearMap make_gradient(Index rows, Index cols, Boundary bc) {
  require(rows >= 1 && cols >= 1, ErrorCode::contract_violation, "empty grid");
  const Index n = rows * cols;
  const bool periodic = bc == Boundary::periodic;
  auto fwd = [=](const Vec& x) -> Vec {
    Vec g = Vec::Zero(2 * n);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) {
        const Index p = i * cols + j;
        if (j + 1 < cols) g[p] = x[p + 1] - x[p];
        else if (periodic) g[p] = x[i * cols] - x[p];
        if (i + 1 < rows) g[n + p] = x[p + cols] - x[p];
        else if (periodic) g[n + p] = x[j] - x[p];
      }
    return g;
  };
  auto adj = [=](const Vec& g) -> Vec {
    Vec x = Vec::Zero(n);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) {
        const Index p = i * cols + j;
        const double h = g[p], v = g[n + p];
        if (j + 1 < cols) {
          x[p + 1] += h;
          x[p] -= h;
        } else if (periodic) {
          x[i * cols] += h;
          x[p] -= h;
        }
        if (i + 1 < rows) {
          x[p + cols] += v;
          x[p] -= v;
        } else if (periodic) {
          x[j] += v;
          x[p] -= v;
        }
      }
    return x;
  };
  return {n, 2 * n, fwd, adj, "gradient"};
}

namespace detail {

inline Index boundary_index(Index k, Index n, bool periodic) {
  if (periodic) return ((k % n) + n) % n;
  const Index period = 2 * n;
  Index m = ((k % period) + period) % period;
  return m < n ? m : period - 1 - m;
}

// Padded-line source index: position k of the padded line reads pixel
// boundary_index(k - hsize/2).
inline std::vector<Index> padded_map(Index len, Index hsize, bool periodic) {
  const Index half = hsize / 2;
  std::vector<Index> map(std::size_t(len + 2 * half));
  for (Index k = 0; k < len + 2 * half; ++k)
    map[std::size_t(k)] = boundary_index(k - half, len, periodic);
  return map;
}

// 1-D box average (running sum over the padded line) along rows when
// `along_cols`, else along columns. The adjoint sums windows back onto the
// padded line and scatters it.
inline void box_pass(const Vec& in, Vec& out, Index rows, Index cols, Index hsize,
                     const std::vector<Index>& map, bool along_cols, bool adjoint) {
  const double w = 1.0 / double(hsize);
  const Index len = along_cols ? cols : rows;
  const Index lines = along_cols ? rows : cols;
  const Index stride = along_cols ? 1 : cols;
  const Index padded = Index(map.size());
  std::vector<double> ext(static_cast<std::size_t>(padded));
  out.setZero(in.size());
  for (Index l = 0; l < lines; ++l) {
    const Index base = along_cols ? l * cols : l;
    if (!adjoint) {
      for (Index k = 0; k < padded; ++k) ext[std::size_t(k)] = in[base + map[std::size_t(k)] * stride];
      double acc = 0.0;
      for (Index k = 0; k < hsize; ++k) acc += ext[std::size_t(k)];
      for (Index j = 0; j < len; ++j) {
        out[base + j * stride] = w * acc;
        if (j + 1 < len) acc += ext[std::size_t(j + hsize)] - ext[std::size_t(j)];
      }
    } else {
      // ext[k] = w * sum of in[j] over windows j..j+hsize-1 containing k
      double acc = 0.0;
      for (Index k = 0; k < padded; ++k) {
        if (k < len) acc += in[base + k * stride];
        if (k - hsize >= 0 && k - hsize < len) acc -= in[base + (k - hsize) * stride];
        ext[std::size_t(k)] = w * acc;
      }
      for (Index k = 0; k < padded; ++k) out[base + map[std::size_t(k)] * stride] += ext[std::size_t(k)];
    }
  }
}

}  // namespace detail

/// hsize x hsize uniform average. Periodic wraps; Neumann reflects
/// half-sample symmetrically.
inline LinearMap make_blur(Index rows, Index cols, Index hsize, Boundary bc) {
  require(rows >= 1 && cols >= 1, ErrorCode::contract_violation, "empty grid");
  if (hsize < 1 || hsize % 2 == 0)
    throw Error(ErrorCode::invalid_kernel, "hsize must be odd and positive", double(hsize));
  const Index n = rows * cols;
  const bool periodic = bc == Boundary::periodic;
  auto row_map = std::make_shared<const std::vector<Index>>(detail::padded_map(cols, hsize, periodic));
  auto col_map = std::make_shared<const std::vector<Index>>(detail::padded_map(rows, hsize, periodic));
  auto run = [=](const Vec& x, bool adjoint) -> Vec {
    Vec tmp, out;
    detail::box_pass(x, tmp, rows, cols, hsize, *row_map, true, adjoint);
    detail::box_pass(tmp, out, rows, cols, hsize, *col_map, false, adjoint);
    return out;
  };
  return {n, n, [run](const Vec& x) { return run(x, false); },
          [run](const Vec& y) { return run(y, true); }, "blur"};
}

struct TvL1Params {
  Index rows = 0;
  Index cols = 0;
  Index hsize = 9;
  Boundary boundary = Boundary::periodic;
  double mu = 0.05;
  double gamma1 = 0.025;
  double s1 = 1.0;
  double s2 = 2.0;
  double r1 = 0.99;
  double r2 = 0.495;
};

struct DualPair {
  Vec u;
  Vec v;

  Vec stacked() const {
    Vec y(u.size() + v.size());
    y << u, v;
    return y;
  }
  static DualPair split(const Vec& y, Index n) {
    require(y.size() == 3 * n, ErrorCode::contract_violation, "dual vector has wrong size");
    return {y.head(n), y.tail(2 * n)};
  }
};

struct TvL1Problem {
  TvL1Params params;
  Vec observed;
  LinearMap k;
  LinearMap dgrad;
  Vec k_symbol;  // |K^|^2 on the half spectrum (periodic only)
  Vec d_symbol;  // |D^|^2

  Index size() const { return observed.size(); }
  double gamma1() const { return params.gamma1; }
  double gamma2() const { return params.mu - params.gamma1; }
  bool periodic() const { return params.boundary == Boundary::periodic; }

  /// A = [K; gamma2 D]
  LinearMap a() const { return LinearMap::stack({k, dgrad.scaled(gamma2())}); }

  /// gamma1 = 0 turns the primal step into a linear solve.
  TvL1Problem with_gamma1(double g1) const {
    TvL1Problem p = *this;
    p.params.gamma1 = g1;
    p.validate_split();
    return p;
  }

  void validate_split() const {
    const auto& q = params;
    require(q.mu > 0.0 && std::isfinite(q.mu), ErrorCode::configuration, "mu must be positive");
    require(q.gamma1 >= 0.0 && q.gamma1 < q.mu, ErrorCode::configuration,
            "gamma1 must lie in [0, mu)");
    require(q.s1 > 0 && q.s2 > 0 && q.r1 > 0 && q.r2 > 0, ErrorCode::configuration,
            "s1, s2, r1, r2 must be positive");
  }
};

inline TvL1Problem make_tvl1_problem(const TvL1Params& prm, Vec observed) {
  require(prm.rows >= 1 && prm.cols >= 1, ErrorCode::configuration, "empty image");
  require_dim(observed.size(), prm.rows * prm.cols, "observed image");
  TvL1Problem p;
  p.params = prm;
  p.observed = std::move(observed);
  p.validate_split();
  p.k = make_blur(prm.rows, prm.cols, prm.hsize, prm.boundary);
  p.dgrad = make_gradient(prm.rows, prm.cols, prm.boundary);
  if (p.periodic()) {
    p.k_symbol = normal_symbol(p.k, prm.rows, prm.cols);
    p.d_symbol = normal_symbol(p.dgrad, prm.rows, prm.cols);
    if (!((p.k_symbol + p.d_symbol).minCoeff() > 1e-12))
      throw Error(ErrorCode::rank_deficiency, "K and D share a null vector");
  } else {
    const LinearMap kk = p.k, dd = p.dgrad;
    const auto normal = [kk, dd](const Vec& x) -> Vec {
      return kk.adjoint(kk.apply(x)) + dd.adjoint(dd.apply(x));
    };
    if (null_space_probe(normal, p.size()) > kNullProbeThreshold)
      throw Error(ErrorCode::rank_deficiency, "K and D share a null vector");
  }
  return p;
}

inline double objective(const TvL1Problem& p, const Vec& x) {
  return (p.k.apply(x) - p.observed).lpNorm<1>() + p.params.mu * p.dgrad.apply(x).lpNorm<1>();
}

inline bool dual_feasible(const DualPair& d, double slack = 1e-12) {
  return (d.u.size() == 0 || d.u.cwiseAbs().maxCoeff() <= 1.0 + slack) &&
         (d.v.size() == 0 || d.v.cwiseAbs().maxCoeff() <= 1.0 + slack);
}

/// L(x, (u, v)) = gamma1 ||Dx||_1 + <Kx, u> + gamma2 <Dx, v> - <f, u>
inline double saddle_objective(const TvL1Problem& p, const Vec& x, const DualPair& d) {
  if (!dual_feasible(d)) throw Error(ErrorCode::infeasible_dual, "dual pair outside the unit box");
  const Vec dx = p.dgrad.apply(x);
  return p.gamma1() * dx.lpNorm<1>() + (p.k.apply(x) - p.observed).dot(d.u) +
         p.gamma2() * dx.dot(d.v);
}

/// u = P(ubar + tau s1 (Kx - f)),  v = P(vbar + tau s2 gamma2 Dx)
inline DualPair dual_update(const TvL1Problem& p, const DualPair& prev, const Vec& x,
                            double tau = 1.0) {
  DualPair d;
  d.u = clamp(prev.u + tau * p.params.s1 * (p.k.apply(x) - p.observed), -1.0, 1.0);
  d.v = clamp(prev.v + tau * p.params.s2 * p.gamma2() * p.dgrad.apply(x), -1.0, 1.0);
  return d;
}

/// B = [K / sqrt(r1 lambda); gamma2 D / sqrt(r2 lambda)]
inline LinearMap stacked_b(const TvL1Problem& p, double lambda = 1.0) {
  return LinearMap::stack({p.k.scaled(1.0 / std::sqrt(p.params.r1 * lambda)),
                           p.dgrad.scaled(p.gamma2() / std::sqrt(p.params.r2 * lambda))});
}

/// B^T B = (K^T K / r1 + gamma2^2 D^T D / r2) / lambda
inline Metric normal_metric(const TvL1Problem& p, double lambda = 1.0) {
  const double c1 = 1.0 / (p.params.r1 * lambda);
  const double c2 = p.gamma2() * p.gamma2() / (p.params.r2 * lambda);
  if (p.periodic())
    return spectral_metric(p.params.rows, p.params.cols, c1 * p.k_symbol + c2 * p.d_symbol);
  const LinearMap kk = p.k, dd = p.dgrad;
  const Metric::Fn apply = [kk, dd, c1, c2](const Vec& x) -> Vec {
    return c1 * kk.adjoint(kk.apply(x)) + c2 * dd.adjoint(dd.apply(x));
  };
  return Metric::general(p.size(), apply, cg_inverse(apply, p.size()));
}

/// xi = [(K x_prev / sqrt(r1) - lambda sqrt(r1) u) / sqrt(lambda);
///       (gamma2 D x_prev / sqrt(r2) - lambda sqrt(r2) v) / sqrt(lambda)]
inline Vec inner_xi(const TvL1Problem& p, const Vec& x_prev, const DualPair& d, double lambda) {
  const double sr1 = std::sqrt(p.params.r1), sr2 = std::sqrt(p.params.r2), sl = std::sqrt(lambda);
  const Index n = p.size();
  Vec xi(3 * n);
  xi.head(n) = (p.k.apply(x_prev) / sr1 - lambda * sr1 * d.u) / sl;
  xi.tail(2 * n) = (p.gamma2() * p.dgrad.apply(x_prev) / sr2 - lambda * sr2 * d.v) / sl;
  return xi;
}

/// Inner problem of the primal step at (x_prev, y = (u, v)). Pass a cached
/// B^T B to avoid rebuilding it.
inline InnerProblem build_inner(const TvL1Problem& p, const Vec& x_prev, const DualPair& d,
                                double lambda = 1.0, std::optional<Metric> btb = std::nullopt) {
  require(lambda > 0.0, ErrorCode::contract_violation, "lambda must be positive");
  return make_inner_problem(stacked_b(p, lambda), btb ? *btb : normal_metric(p, lambda),
                            inner_xi(p, x_prev, d, lambda), p.gamma1(), p.dgrad);
}

struct InnerSettings {
  long max_iters = 200000;
  /// Gap used when the outer solver asks for an exact primal step.
  double exact_gap = 1e-10;
  int gap_every = 5;
  bool warm_start = true;
};

namespace detail {
struct PrimalStepCache {
  double lambda = -1.0;
  Metric btb;
  double lipschitz = 0.0;
  std::optional<Vec> warm;
};
}  // namespace detail

/// Saddle problem of the gamma1/gamma2 split with block metrics
/// S = diag(I/s1, I/s2), R = diag(I/r1, I/r2).
///
/// The primal oracle keeps the inner dual iterate between calls as a warm
/// start, so one SaddleProblem must drive only one run at a time.
inline SaddleProblem make_saddle(const TvL1Problem& p, const InnerSettings& inner = {}) {
  const Index n = p.size();
  const auto cfg = make_pdl_config(p.params.r1, p.params.s1, p.params.r2, p.params.s2, n, 2 * n);
  auto prob = std::make_shared<const TvL1Problem>(p);
  auto cache = std::make_shared<detail::PrimalStepCache>();

  SaddleProblem sp;
  sp.a = p.a();
  sp.s = cfg.s;
  sp.r = cfg.r;
  sp.f = [prob](const Vec& x) { return prob->gamma1() * prob->dgrad.apply(x).lpNorm<1>(); };
  sp.g = [prob, n](const Vec& y) {
    const DualPair d = DualPair::split(y, n);
    if (!dual_feasible(d)) return kInf;
    return prob->observed.dot(d.u);
  };
  sp.g_prox = [prob, n](const Vec& c, double tau, const Metric& s, double) -> ProxResult {
    require(s.is_diagonal(), ErrorCode::contract_violation, "TV-L1 dual prox needs a diagonal S");
    const Vec sinv = s.diagonal_entries().head(n).cwiseInverse();
    Vec y(3 * n);
    y.head(n) = clamp(c.head(n) - tau * sinv.cwiseProduct(prob->observed), -1.0, 1.0);
    y.tail(2 * n) = clamp(c.tail(2 * n), -1.0, 1.0);
    return {std::move(y), 0.0, 0};
  };
  sp.x_step = [prob, cache, inner, n](const XStepRequest& rq) -> ProxResult {
    if (cache->lambda != rq.lambda) {
      cache->lambda = rq.lambda;
      cache->btb = normal_metric(*prob, rq.lambda);
      cache->lipschitz = 0.0;
    }
    const DualPair d = DualPair::split(rq.y, n);
    InnerProblem ip = build_inner(*prob, rq.x_prev, d, rq.lambda, cache->btb);
    if (prob->gamma1() == 0.0) return {ip.center(), 0.0, 0};
    if (cache->lipschitz == 0.0) cache->lipschitz = estimate_inner_lipschitz(ip);
    ip.lipschitz = cache->lipschitz;
    const double g1 = prob->gamma1();
    const double target =
        rq.tolerance > 0.0 ? rq.tolerance * std::min(1.0, 1.0 / g1) : inner.exact_gap;
    FistaOptions fo;
    fo.gap_every = inner.gap_every;
    FistaResult r = fista_certified_prox(ip, target, inner.warm_start ? cache->warm : std::nullopt,
                                         inner.max_iters, fo);
    cache->warm = r.w;
    return {std::move(r.x), g1 * r.gap, r.iterations};
  };
  sp.primal_objective = [prob](const Vec& x) { return objective(*prob, x); };
  if (p.gamma1() == 0.0) sp.f_prox_euclid = [](const Vec& c, double) { return c; };
  return sp;
}

/// x0 = observed image, ybar0 = 0.
inline SolverState initial_state(const TvL1Problem& p) {
  return SolverState::initial(p.observed, Vec::Zero(3 * p.size()));
}

}  // namespace pdc
