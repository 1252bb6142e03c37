#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pdc/error.hpp"
#include "pdc/rng.hpp"

namespace pdc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want)
    throw Error(ErrorCode::contract_violation,
                std::string(what) + ": dimension " + std::to_string(got) + " != " +
                    std::to_string(want));
}

inline Vec random_vector(Index n, Rng& rng) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// ---------------------------------------------------------------------------
// LinearMap

/// A bounded linear operator R^in -> R^out given by its action and the action
/// of its adjoint. Value type; the closures must be pure.
class LinearMap {
 public:
  using Fn = std::function<Vec(const Vec&)>;

  LinearMap() = default;
  LinearMap(Index in_dim, Index out_dim, Fn apply, Fn adjoint, std::string name = {})
      : in_(in_dim), out_(out_dim), apply_(std::move(apply)), adjoint_(std::move(adjoint)),
        name_(std::move(name)) {
    require(in_ > 0 && out_ > 0, ErrorCode::contract_violation, "LinearMap dims must be positive");
  }

  Index in_dim() const { return in_; }
  Index out_dim() const { return out_; }
  const std::string& name() const { return name_; }

  Vec apply(const Vec& x) const {
    require_dim(x.size(), in_, "LinearMap::apply");
    return apply_(x);
  }
  Vec adjoint(const Vec& y) const {
    require_dim(y.size(), out_, "LinearMap::adjoint");
    return adjoint_(y);
  }

  static LinearMap identity(Index n) {
    return {n, n, [](const Vec& x) { return x; }, [](const Vec& y) { return y; }, "identity"};
  }

  static LinearMap from_dense(Mat m) {
    const Index in = m.cols(), out = m.rows();
    auto shared = std::make_shared<const Mat>(std::move(m));
    return {in, out, [shared](const Vec& x) -> Vec { return (*shared) * x; },
            [shared](const Vec& y) -> Vec { return shared->transpose() * y; }, "dense"};
  }

  /// c * this
  LinearMap scaled(double c) const {
    auto self = *this;
    return {in_, out_, [self, c](const Vec& x) -> Vec { return c * self.apply(x); },
            [self, c](const Vec& y) -> Vec { return c * self.adjoint(y); }, name_};
  }

  /// Vertical stack [A1; A2; ...] of maps sharing the input space.
  static LinearMap stack(std::vector<LinearMap> parts) {
    require(!parts.empty(), ErrorCode::contract_violation, "stack of zero maps");
    const Index in = parts.front().in_dim();
    Index out = 0;
    for (const auto& p : parts) {
      require_dim(p.in_dim(), in, "LinearMap::stack");
      out += p.out_dim();
    }
    auto ps = std::make_shared<const std::vector<LinearMap>>(std::move(parts));
    auto fwd = [ps, out](const Vec& x) -> Vec {
      Vec y(out);
      Index off = 0;
      for (const auto& p : *ps) {
        y.segment(off, p.out_dim()) = p.apply(x);
        off += p.out_dim();
      }
      return y;
    };
    auto adj = [ps, in](const Vec& y) -> Vec {
      Vec x = Vec::Zero(in);
      Index off = 0;
      for (const auto& p : *ps) {
        x += p.adjoint(y.segment(off, p.out_dim()));
        off += p.out_dim();
      }
      return x;
    };
    return {in, out, fwd, adj, "stack"};
  }

 private:
  Index in_ = 0;
  Index out_ = 0;
  Fn apply_;
  Fn adjoint_;
  std::string name_;
};

/// Dense matrix of a LinearMap (column by column). Intended for small maps in
/// tests and for the dense step-condition path.
inline Mat to_dense(const LinearMap& a) {
  Mat m(a.out_dim(), a.in_dim());
  Vec e = Vec::Zero(a.in_dim());
  for (Index j = 0; j < a.in_dim(); ++j) {
    e[j] = 1.0;
    m.col(j) = a.apply(e);
    e[j] = 0.0;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Conjugate gradient

struct CgResult {
  Vec x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Plain CG for an SPD operator. Stops when ||b - Ax|| <= tol * ||b||.
inline CgResult conjugate_gradient(const std::function<Vec(const Vec&)>& apply, const Vec& b,
                                   Vec x0, double tol, int max_iters) {
  CgResult out;
  out.x = std::move(x0);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.x.setZero();
    out.converged = true;
    return out;
  }
  Vec r = b - apply(out.x);
  Vec p = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_iters; ++it) {
    if (std::sqrt(rr) <= tol * bnorm) {
      out.converged = true;
      break;
    }
    const Vec q = apply(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0)) break;  // operator not positive on the Krylov space
    const double a = rr / pq;
    out.x += a * p;
    r -= a * q;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    out.iterations = it + 1;
  }
  out.relative_residual = std::sqrt(rr) / bnorm;
  if (out.relative_residual <= tol) out.converged = true;
  return out;
}

// ---------------------------------------------------------------------------
// Metric

enum class MetricStructure { identity_scaled, diagonal, block_scaled_identity, general_spd };

struct MetricBlock {
  double scale;
  Index dim;
};

/// Block-diagonal metric diag(scale_1 I_1, scale_2 I_2, ...).
struct BlockMetric {
  std::vector<MetricBlock> blocks;

  Index dim() const {
    Index n = 0;
    for (const auto& b : blocks) n += b.dim;
    return n;
  }
  void validate() const {
    require(!blocks.empty(), ErrorCode::contract_violation, "BlockMetric needs at least one block");
    for (const auto& b : blocks) {
      require(b.scale > 0.0 && std::isfinite(b.scale), ErrorCode::contract_violation,
              "BlockMetric scale must be positive");
      require(b.dim > 0, ErrorCode::contract_violation, "BlockMetric block dim must be positive");
    }
  }
};

/// Symmetric positive definite bilinear form x -> Dx with its inverse.
///
/// Diagonal-type metrics (identity_scaled, diagonal, block_scaled_identity)
/// keep the diagonal and invert analytically; general metrics carry an
/// inverse closure (typically CG or a spectral solve).
class Metric {
 public:
  using Fn = std::function<Vec(const Vec&)>;

  Metric() = default;

  static Metric identity(Index n, double scale = 1.0) {
    require(n > 0 && scale > 0.0, ErrorCode::contract_violation, "identity metric");
    Metric m;
    m.dim_ = n;
    m.structure_ = MetricStructure::identity_scaled;
    m.diag_ = Vec::Constant(n, scale);
    return m;
  }

  static Metric diagonal(Vec d) {
    require(d.size() > 0, ErrorCode::contract_violation, "empty diagonal metric");
    require((d.array() > 0.0).all() && d.allFinite(), ErrorCode::contract_violation,
            "diagonal metric entries must be positive");
    Metric m;
    m.dim_ = d.size();
    m.structure_ = MetricStructure::diagonal;
    m.diag_ = std::move(d);
    return m;
  }

  static Metric blocks(const BlockMetric& b) {
    b.validate();
    Metric m;
    m.dim_ = b.dim();
    m.structure_ = MetricStructure::block_scaled_identity;
    m.blocks_ = b;
    m.diag_.resize(m.dim_);
    Index off = 0;
    for (const auto& blk : b.blocks) {
      m.diag_.segment(off, blk.dim).setConstant(blk.scale);
      off += blk.dim;
    }
    return m;
  }

  static Metric general(Index n, Fn apply, Fn inverse_apply) {
    require(n > 0, ErrorCode::contract_violation, "general metric dim");
    Metric m;
    m.dim_ = n;
    m.structure_ = MetricStructure::general_spd;
    m.apply_ = std::move(apply);
    m.inverse_ = std::move(inverse_apply);
    return m;
  }

  /// General SPD metric from a dense matrix; inverse via CG (tol 1e-10,
  /// at most 10*dim iterations).
  static Metric dense(Mat d);

  Index dim() const { return dim_; }
  MetricStructure structure() const { return structure_; }
  bool is_diagonal() const { return structure_ != MetricStructure::general_spd; }
  const Vec& diagonal_entries() const { return diag_; }
  const BlockMetric& block_layout() const { return blocks_; }

  Vec apply(const Vec& x) const {
    require_dim(x.size(), dim_, "Metric::apply");
    if (is_diagonal()) return diag_.cwiseProduct(x);
    return apply_(x);
  }

  Vec inverse_apply(const Vec& x) const {
    require_dim(x.size(), dim_, "Metric::inverse_apply");
    if (is_diagonal()) return x.cwiseQuotient(diag_);
    return inverse_(x);
  }

  /// <x, Dy>
  double inner(const Vec& x, const Vec& y) const { return x.dot(apply(y)); }

 private:
  Index dim_ = 0;
  MetricStructure structure_ = MetricStructure::identity_scaled;
  Vec diag_;
  BlockMetric blocks_;
  Fn apply_;
  Fn inverse_;
};

inline constexpr double kMetricCgTol = 1e-10;

/// Inverse application of an SPD operator by CG; throws singular_metric if
/// the solve does not reach the tolerance in 10*dim iterations.
inline Metric::Fn cg_inverse(Metric::Fn apply, Index dim, double tol = kMetricCgTol) {
  return [apply = std::move(apply), dim, tol](const Vec& b) -> Vec {
    const int max_iters = static_cast<int>(std::min<Index>(10 * dim, 1'000'000));
    auto r = conjugate_gradient(apply, b, Vec::Zero(dim), tol, max_iters);
    if (!r.converged)
      throw Error(ErrorCode::singular_metric,
                  "CG did not converge (relative residual " + std::to_string(r.relative_residual) +
                      ")",
                  r.relative_residual);
    return r.x;
  };
}

inline Metric Metric::dense(Mat d) {
  require(d.rows() == d.cols() && d.rows() > 0, ErrorCode::contract_violation,
          "dense metric must be square");
  auto shared = std::make_shared<const Mat>(std::move(d));
  Fn apply = [shared](const Vec& x) -> Vec { return (*shared) * x; };
  const Index n = shared->rows();
  return general(n, apply, cg_inverse(apply, n));
}

/// ||x||_M = sqrt(<x, Mx>)
inline double metric_norm(const Vec& x, const Metric& m) {
  require_dim(x.size(), m.dim(), "metric_norm");
  const double q = x.dot(m.apply(x));
  return std::sqrt(std::max(q, 0.0));
}

/// Randomized null-space probe for x -> A^T R A x. Solves M e = M x0 from zero
/// with CG; for SPD M the solution recovers x0, otherwise the component of x0
/// in the null space is left over. Returns the relative leftover norm.
inline double null_space_probe(const Metric::Fn& apply, Index dim, std::uint64_t seed = 7) {
  Rng rng(seed);
  const Vec x0 = random_vector(dim, rng);
  const Vec b = apply(x0);
  if (b.norm() == 0.0) return 1.0;
  const int max_iters = static_cast<int>(std::min<Index>(10 * dim, 1'000'000));
  auto r = conjugate_gradient(apply, b, Vec::Zero(dim), 1e-13, max_iters);
  return (x0 - r.x).norm() / x0.norm();
}

inline constexpr double kNullProbeThreshold = 1e-4;

/// Metric x -> A^T R A x. The inverse is a CG solve at relative residual
/// 1e-10. A must have full column rank; this is checked with a randomized
/// null-space probe unless `probe` is false.
inline Metric compose_normal_metric(const LinearMap& a, const Metric& r, bool probe = true) {
  require_dim(r.dim(), a.out_dim(), "compose_normal_metric");
  Metric::Fn apply = [a, r](const Vec& x) -> Vec { return a.adjoint(r.apply(a.apply(x))); };
  const Index n = a.in_dim();
  if (probe) {
    const double leftover = null_space_probe(apply, n);
    if (leftover > kNullProbeThreshold)
      throw Error(ErrorCode::singular_metric,
                  "A^T R A failed the full-column-rank probe (null component " +
                      std::to_string(leftover) + ")",
                  leftover);
  }
  return Metric::general(n, apply, cg_inverse(apply, n));
}

// ---------------------------------------------------------------------------
// Spectral estimates

/// Power iteration on A^T A; the estimate is the largest sqrt Rayleigh
/// quotient seen. `trace`, when given, receives the running estimate.
inline double estimate_norm(const LinearMap& a, int iters = 200, std::uint64_t seed = 2024,
                            std::vector<double>* trace = nullptr) {
  require(iters >= 1, ErrorCode::contract_violation, "estimate_norm needs iters >= 1");
  Rng rng(seed);
  Vec x = random_vector(a.in_dim(), rng);
  x.normalize();
  double est = 0.0;
  for (int k = 0; k < iters; ++k) {
    const Vec ax = a.apply(x);
    const double q = ax.squaredNorm();  // Rayleigh quotient of A^T A at unit x
    est = std::max(est, std::sqrt(q));
    if (trace) trace->push_back(est);
    Vec y = a.adjoint(ax);
    const double ny = y.norm();
    if (ny == 0.0) return est;  // x in the null space; A may be zero
    x = y / ny;
  }
  return est;
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
inline double estimate_spectral_radius(const Metric::Fn& apply, Index dim, int iters = 200,
                                       std::uint64_t seed = 2024) {
  Rng rng(seed);
  Vec x = random_vector(dim, rng);
  x.normalize();
  double est = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vec y = apply(x);
    est = std::max(est, x.dot(y));
    const double ny = y.norm();
    if (ny == 0.0) return est;
    x = y / ny;
  }
  return est;
}

inline constexpr double kStepConditionMargin = 1e-12;
inline constexpr Index kDenseStepCheckMaxDim = 1024;

/// Smallest eigenvalue of R - tau*lambda*S^{-1}.
inline double step_condition_min_eigenvalue(const Metric& r, const Metric& s, double tau,
                                            double lambda) {
  require_dim(s.dim(), r.dim(), "check_step_condition");
  require(tau > 0.0 && lambda > 0.0, ErrorCode::contract_violation, "steps must be positive");
  const double tl = tau * lambda;
  if (r.is_diagonal() && s.is_diagonal()) {
    const Vec m = r.diagonal_entries() - tl * s.diagonal_entries().cwiseInverse();
    return m.minCoeff();
  }
  const Index n = r.dim();
  auto op = [&](const Vec& x) -> Vec { return r.apply(x) - tl * s.inverse_apply(x); };
  if (n <= kDenseStepCheckMaxDim) {
    Mat m(n, n);
    Vec e = Vec::Zero(n);
    for (Index j = 0; j < n; ++j) {
      e[j] = 1.0;
      m.col(j) = op(e);
      e[j] = 0.0;
    }
    const Mat sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }
  // Inverse iteration with CG solves. CG meeting nonpositive curvature
  // certifies that the operator is not positive definite.
  Rng rng(2024);
  Vec x = random_vector(n, rng);
  x.normalize();
  double est = x.dot(op(x));
  for (int it = 0; it < 60; ++it) {
    Vec r = x, p = x, z = Vec::Zero(n);
    double rr = r.squaredNorm();
    for (Index k = 0; k < 10 * n && std::sqrt(rr) > 1e-10; ++k) {
      const Vec q = op(p);
      const double pq = p.dot(q);
      if (!(pq > 0.0)) return pq / p.squaredNorm();
      const double a = rr / pq;
      z += a * p;
      r -= a * q;
      const double rr_new = r.squaredNorm();
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
    x = z.normalized();
    est = std::min(est, x.dot(op(x)));
  }
  return est;
}

/// True iff R - tau*lambda*S^{-1} is positive definite (smallest eigenvalue
/// above 1e-12).
inline bool check_step_condition(const Metric& r, const Metric& s, double tau, double lambda) {
  return step_condition_min_eigenvalue(r, s, tau, lambda) > kStepConditionMargin;
}

}  // namespace pdc
