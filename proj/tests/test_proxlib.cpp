#include <gtest/gtest.h>

#include <cmath>

#include "pdc/proxlib.hpp"
#include "prox_instances.hpp"

using namespace pdc;
using pdc::testing::random_separable_problem;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec x(Index(v.size()));
  Index i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

ProxProblem abs_problem(double y) { return {ConvexFunction::l1(), 1.0, Metric::identity(1), vec({y})}; }

// Minimizer of a 1-D convex function on [lo, hi] by a 1e-6 grid refined by
// golden-section search.
double grid_argmin(const std::function<double(double)>& g, double lo, double hi) {
  double best = lo, fbest = g(lo);
  for (double t = lo; t <= hi; t += 1e-6) {
    const double f = g(t);
    if (f < fbest) {
      fbest = f;
      best = t;
    }
  }
  double a = best - 1e-6, b = best + 1e-6;
  for (int i = 0; i < 60; ++i) {
    const double m1 = a + 0.382 * (b - a), m2 = a + 0.618 * (b - a);
    if (g(m1) < g(m2)) b = m2;
    else a = m1;
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST(ExactProx, KnownValues) {
  EXPECT_EQ(exact_prox_separable(abs_problem(3.0)), vec({2.0}));

  ProxProblem p{ConvexFunction::l1(), 1.0, Metric::diagonal(vec({2, 1})), vec({3, -0.2})};
  const Vec z = exact_prox_separable(p);
  // Grid oracle per coordinate: |x| + d/2 (x - y)^2.
  const double z0 = grid_argmin([](double x) { return std::abs(x) + (x - 3.0) * (x - 3.0); }, -4, 4);
  const double z1 =
      grid_argmin([](double x) { return std::abs(x) + 0.5 * (x + 0.2) * (x + 0.2); }, -1, 1);
  EXPECT_NEAR(z0, 2.5, 1e-6);
  EXPECT_NEAR(z1, 0.0, 1e-6);
  EXPECT_NEAR(z[0], 2.5, 1e-15);
  EXPECT_EQ(z[1], 0.0);

  ProxProblem ball{ConvexFunction::inf_ball(1.0), 0.3, Metric::identity(3), vec({0.5, -2, 3})};
  EXPECT_EQ(exact_prox_separable(ball), vec({0.5, -1, 1}));
}

TEST(ExactProx, LinearPlusL1MatchesGrid) {
  ProxProblem p{ConvexFunction::linear_plus_l1(vec({0.4}), 0.7), 0.8, Metric::diagonal(vec({1.5})),
                vec({1.2})};
  const double oracle = grid_argmin(
      [](double x) { return 0.4 * x + 0.7 * std::abs(x) + 1.5 / 1.6 * (x - 1.2) * (x - 1.2); }, -3,
      3);
  EXPECT_NEAR(exact_prox_separable(p)[0], oracle, 1e-6);
}

TEST(ExactProx, RejectsUnsupported) {
  ProxProblem p{ConvexFunction::custom([](const Vec& x) { return x.squaredNorm(); }), 1.0,
                Metric::identity(2), Vec::Zero(2)};
  try {
    exact_prox_separable(p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_separable);
  }
  Mat m = Mat::Identity(2, 2);
  ProxProblem q{ConvexFunction::l1(), 1.0, Metric::dense(m), Vec::Zero(2)};
  EXPECT_THROW(exact_prox_separable(q), Error);
}

TEST(ExactProx, ZeroIsFixedPointOfSoftThreshold) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    auto p = random_separable_problem(rng, 4, 0);
    p.y.setZero();
    EXPECT_EQ(exact_prox_separable(p), Vec::Zero(4));
  }
}

TEST(ExactProx, Nonexpansive) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    auto p = random_separable_problem(rng, 5, t);
    auto q = p;
    q.y = p.y + random_vector(5, rng);
    const double lhs = metric_norm(exact_prox_separable(p) - exact_prox_separable(q), p.d);
    EXPECT_LE(lhs, metric_norm(p.y - q.y, p.d) + 1e-10);
  }
}

TEST(CheckType0, KnownValues) {
  const Vec z = vec({1.0, 2.0});
  EXPECT_TRUE(check_type0(z, z, 1.0, 0.0, Metric::identity(2)));
  EXPECT_TRUE(check_type0(vec({1.0}), vec({0.0}), 0.5, 1.0, Metric::identity(1)));
  EXPECT_FALSE(check_type0(vec({1.01}), vec({0.0}), 0.5, 1.0, Metric::identity(1)));
}

TEST(CheckType2, KnownValues) {
  const auto p = abs_problem(3.0);
  std::vector<Vec> probes;
  for (double x : {-1.0, 0.0, 1.0, 2.0, 5.0}) probes.push_back(vec({x}));
  EXPECT_TRUE(check_type2_necessary(exact_prox_separable(p), p, 0.0, probes));
  EXPECT_FALSE(check_type2_necessary(vec({2.3}), p, 0.0, {vec({2.0})}));
  // The violation margin at x = 2 is 0.09.
  EXPECT_FALSE(check_type2_necessary(vec({2.3}), p, 0.089, {vec({2.0})}));
  EXPECT_TRUE(check_type2_necessary(vec({2.3}), p, 0.091, {vec({2.0})}));
  EXPECT_TRUE(check_type2_necessary(vec({-7.0}), p, 1e6, probes));
}

TEST(CheckType2, InfiniteProbeIsRejected) {
  ProxProblem p{ConvexFunction::inf_ball(1.0), 1.0, Metric::identity(1), vec({0.5})};
  try {
    check_type2_necessary(vec({0.5}), p, 0.0, {vec({3.0})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_probe);
  }
}

TEST(CheckType1, KnownValues) {
  const auto p = abs_problem(3.0);
  const double fmin = p.objective(vec({2.0}));
  EXPECT_DOUBLE_EQ(fmin, 2.5);
  EXPECT_NEAR(p.objective(vec({2.1})), 2.505, 1e-12);
  EXPECT_TRUE(check_type1_via_gap(vec({2.0}), p, 0.0, fmin));
  EXPECT_TRUE(check_type1_via_gap(vec({2.1}), p, 0.005, fmin));
  EXPECT_FALSE(check_type1_via_gap(vec({2.1}), p, 0.0049, fmin));
  const double eps = 0.01;
  const double z = 2.0 + std::sqrt(2.0 * 2.0 * eps);  // G = fmin + 2 eps
  EXPECT_FALSE(check_type1_via_gap(vec({z}), p, eps, fmin));
}

TEST(Type2Epsilon, MatchesScalarFenchelYoung) {
  // h = |.|, y = 3, z = 2.3: slope 0.7, gap |2.3| + 0 - 0.7 * 2.3 = 0.69.
  EXPECT_NEAR(type2_epsilon(vec({2.3}), abs_problem(3.0)), 0.69, 1e-12);
  EXPECT_EQ(type2_epsilon(vec({2.0}), abs_problem(3.0)), 0.0);
  EXPECT_EQ(type2_epsilon(vec({1.0}), abs_problem(3.0)), kInf);  // slope 2 outside [-1, 1]
}

TEST(CertificateChain, KnownValues) {
  Rng rng(11);
  for (int kind = 0; kind < 3; ++kind) {
    auto p = random_separable_problem(rng, 4, kind);
    const auto exact = certificate_chain_check(exact_prox_separable(p), p, 0.0);
    EXPECT_TRUE(exact.type0 && exact.type1 && exact.type2 && exact.type2_probes);
  }
}

TEST(CertificateChain, SubgradientPointsAtRecordedEps) {
  Rng rng(12);
  int checked = 0;
  for (int t = 0; t < 60; ++t) {
    auto p = random_separable_problem(rng, 4, t % 2);
    const auto pt = inexact_prox_by_subgradient(p, p.y, 30, 0.5);
    const double eps = std::max(pt.objective_gap, 1e-12);
    const auto r = certificate_chain_check(pt.z, p, eps);
    EXPECT_TRUE(r.type1);
    EXPECT_TRUE(r.type0);
    EXPECT_TRUE(r.chain_consistent());
    // The same point is type-2 at its Fenchel-Young gap, hence type-1 and type-0 there too.
    if (std::isfinite(r.type2_eps)) {
      const auto r2 = certificate_chain_check(pt.z, p, r.type2_eps);
      EXPECT_TRUE(r2.type2 && r2.type1 && r2.type0);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(CertificateChain, ContrapositiveOfTypeZero) {
  const auto p = abs_problem(3.0);
  const double eps = 0.01;
  const Vec far = vec({2.0 + 1.5 * std::sqrt(2.0 * eps)});
  const auto r = certificate_chain_check(far, p, eps);
  EXPECT_FALSE(r.type0);
  EXPECT_FALSE(r.type2);
  EXPECT_FALSE(r.type1);
}

TEST(Certificates, MonotoneInEps) {
  Rng rng(13);
  for (int t = 0; t < 30; ++t) {
    auto p = random_separable_problem(rng, 3, t);
    const Vec z = exact_prox_separable(p) + 0.05 * random_vector(3, rng);
    bool t0 = false, t1 = false, t2 = false;
    for (double eps : {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0}) {
      const auto r = certificate_chain_check(z, p, eps);
      EXPECT_TRUE(!t0 || r.type0);
      EXPECT_TRUE(!t1 || r.type1);
      EXPECT_TRUE(!t2 || r.type2);
      t0 = r.type0;
      t1 = r.type1;
      t2 = r.type2;
    }
  }
}

TEST(PairedDistanceBound, ConstructedInstances) {
  Rng rng(21);
  for (int t = 0; t < 100; ++t) {
    const auto inst = pdc::testing::paired_instance(rng, 4, t);
    const double dist = metric_norm(inst.z1 - inst.z2, inst.d);
    EXPECT_LE(dist, paired_prox_distance_bound(inst.tau, inst.eps, inst.uv_dist) + 1e-8);
  }
}

TEST(PairedDistanceBound, ReducesToNonexpansiveness) {
  EXPECT_DOUBLE_EQ(paired_prox_distance_bound(1.0, 0.0, 0.7), 0.7);
  EXPECT_NEAR(paired_prox_distance_bound(0.5, 1.0, 0.0), 0.5 * (1.0 + std::sqrt(5.0)), 1e-15);
}

TEST(PerturbWithinBudget, StaysInsideBudget) {
  const auto p = abs_problem(3.0);
  const Vec z = pdc::testing::type2_point(p, vec({1.0}), 0.05);
  EXPECT_LE(type2_epsilon(z, p), 0.05 + 1e-12);
  EXPECT_GT(z[0], 2.0);
}
