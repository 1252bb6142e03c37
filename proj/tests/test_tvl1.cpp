#include <gtest/gtest.h>

#include <cmath>

#include "pdc/tvl1.hpp"
#include "tv_oracle.hpp"

using namespace pdc;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec x(Index(v.size()));
  Index i = 0;
  for (double e : v) x[i++] = e;
  return x;
}

TvL1Problem small_problem(Index rows, Index cols, Index hsize, Boundary bc, std::uint64_t seed,
                          double gamma1 = 0.025) {
  TvL1Params prm;
  prm.rows = rows;
  prm.cols = cols;
  prm.hsize = hsize;
  prm.boundary = bc;
  prm.gamma1 = gamma1;
  Rng rng(seed);
  Vec f(rows * cols);
  for (Index i = 0; i < f.size(); ++i) f[i] = rng.uniform();
  return make_tvl1_problem(prm, f);
}

// Direct convolution with the uniform kernel, reading outside pixels through
// wrap-around or half-sample mirror.
Vec brute_blur(const Vec& x, Index rows, Index cols, Index hsize, Boundary bc) {
  auto fold = [bc](Index k, Index n) {
    if (bc == Boundary::periodic) return ((k % n) + n) % n;
    Index m = ((k % (2 * n)) + 2 * n) % (2 * n);
    return m < n ? m : 2 * n - 1 - m;
  };
  const Index h = hsize / 2;
  Vec out = Vec::Zero(rows * cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      for (Index a = -h; a <= h; ++a)
        for (Index b = -h; b <= h; ++b)
          out[i * cols + j] += x[fold(i + a, rows) * cols + fold(j + b, cols)] / double(hsize * hsize);
  return out;
}

}  // namespace

TEST(Gradient, KnownValues) {
  EXPECT_EQ(make_gradient(3, 4, Boundary::periodic).apply(Vec::Constant(12, 0.7)), Vec::Zero(24));
  EXPECT_EQ(make_gradient(3, 4, Boundary::neumann).apply(Vec::Constant(12, 0.7)), Vec::Zero(24));
  const Vec g = make_gradient(1, 2, Boundary::periodic).apply(vec({0.25, 1.0}));
  EXPECT_EQ(g.head(2), vec({0.75, -0.75}));
  EXPECT_EQ(g.tail(2), Vec::Zero(2));
  const Vec gn = make_gradient(1, 2, Boundary::neumann).apply(vec({0.25, 1.0}));
  EXPECT_EQ(gn, vec({0.75, 0.0, 0.0, 0.0}));
  const Vec gv = make_gradient(2, 1, Boundary::neumann).apply(vec({0.25, 1.0}));
  EXPECT_EQ(gv, vec({0.0, 0.0, 0.75, 0.0}));
}

TEST(Gradient, PeriodicNormBound) {
  for (auto [r, c] : {std::pair<Index, Index>{4, 4}, {5, 7}, {6, 3}}) {
    const Mat d = to_dense(make_gradient(r, c, Boundary::periodic));
    Eigen::SelfAdjointEigenSolver<Mat> es(d.transpose() * d, Eigen::EigenvaluesOnly);
    EXPECT_LE(es.eigenvalues().maxCoeff(), 8.0 + 1e-12);
  }
}

TEST(Blur, KnownValues) {
  Rng rng(1);
  const Vec x = random_vector(20, rng);
  for (auto bc : {Boundary::periodic, Boundary::neumann}) {
    EXPECT_LE((make_blur(4, 5, 1, bc).apply(x) - x).norm(), 1e-15);
    const Vec c = make_blur(4, 5, 3, bc).apply(Vec::Constant(20, 0.3));
    EXPECT_LE((c - Vec::Constant(20, 0.3)).cwiseAbs().maxCoeff(), 1e-15);
  }
  Vec delta = Vec::Zero(25);
  delta[12] = 1.0;
  const Vec stamp = make_blur(5, 5, 3, Boundary::periodic).apply(delta);
  int count = 0;
  for (Index i = 0; i < 25; ++i) {
    const Index r = i / 5, c = i % 5;
    const bool inside = std::abs(r - 2) <= 1 && std::abs(c - 2) <= 1;
    EXPECT_NEAR(stamp[i], inside ? 1.0 / 9.0 : 0.0, 1e-16);
    count += inside;
  }
  EXPECT_EQ(count, 9);
}

TEST(Blur, RejectsEvenKernel) {
  for (Index h : {0, 2, 8}) {
    try {
      make_blur(4, 4, h, Boundary::periodic);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::invalid_kernel);
    }
  }
}

TEST(Blur, MatchesDirectConvolution) {
  Rng rng(2);
  for (auto bc : {Boundary::periodic, Boundary::neumann})
    for (auto [r, c, h] : {std::tuple<Index, Index, Index>{7, 6, 5}, {9, 9, 9}, {3, 8, 9}, {2, 2, 3}}) {
      const Vec x = random_vector(r * c, rng);
      EXPECT_LE((make_blur(r, c, h, bc).apply(x) - brute_blur(x, r, c, h, bc)).norm(), 1e-13);
    }
}

TEST(Blur, PeriodicIsSelfAdjoint) {
  const Mat k = to_dense(make_blur(6, 5, 3, Boundary::periodic));
  EXPECT_LE((k - k.transpose()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DualUpdate, KnownValues) {
  TvL1Params prm;
  prm.rows = 1;
  prm.cols = 2;
  prm.hsize = 1;
  prm.mu = 0.05;
  prm.gamma1 = 0.025;
  prm.s1 = 1.0;
  prm.s2 = 2.0;
  const auto p = make_tvl1_problem(prm, vec({0.0, 0.5}));
  const DualPair zero{Vec::Zero(2), Vec::Zero(4)};

  const auto d0 = dual_update(p, zero, vec({0.0, 0.5}));
  EXPECT_EQ(d0.u, Vec::Zero(2));

  const auto d1 = dual_update(p, zero, vec({2.0, 0.5}));
  EXPECT_EQ(d1.u[0], 1.0);

  // (Dx)_0 = 1, s2 gamma2 = 0.05, inside the unit box.
  const auto d2 = dual_update(p, zero, vec({0.0, 1.0}));
  EXPECT_NEAR(d2.v[0], 0.05, 1e-17);
}

TEST(DualUpdate, PreservesFeasibility) {
  const auto p = small_problem(4, 4, 3, Boundary::periodic, 3);
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const DualPair prev{5.0 * random_vector(16, rng), 5.0 * random_vector(32, rng)};
    const auto d = dual_update(p, prev, 10.0 * random_vector(16, rng), rng.uniform(0.1, 3.0));
    EXPECT_TRUE(dual_feasible(d, 0.0));
  }
}

TEST(Objective, KnownValues) {
  auto p = small_problem(4, 5, 3, Boundary::periodic, 5);
  EXPECT_NEAR(objective(p, Vec::Constant(20, 0.4)), (Vec::Constant(20, 0.4) - p.observed).lpNorm<1>(),
              1e-13);

  auto q = small_problem(4, 5, 1, Boundary::periodic, 6);
  EXPECT_NEAR(objective(q, q.observed), 0.05 * q.dgrad.apply(q.observed).lpNorm<1>(), 1e-15);

  const Vec checker = vec({0, 1, 1, 0});
  TvL1Params prm;
  prm.rows = prm.cols = 2;
  prm.hsize = 1;
  // Periodic: every one of the 8 differences is +-1. Neumann: 4 are zero.
  EXPECT_NEAR(objective(make_tvl1_problem(prm, checker), checker), 0.05 * 8, 1e-15);
  prm.boundary = Boundary::neumann;
  EXPECT_NEAR(objective(make_tvl1_problem(prm, checker), checker), 0.05 * 4, 1e-15);
}

TEST(SaddleObjective, KnownValues) {
  const auto p = small_problem(2, 2, 3, Boundary::periodic, 7);
  EXPECT_EQ(saddle_objective(p, Vec::Zero(4), {Vec::Zero(4), Vec::Zero(8)}), 0.0);
  DualPair bad{Vec::Zero(4), Vec::Zero(8)};
  bad.v[2] = 1.5;
  try {
    saddle_objective(p, Vec::Zero(4), bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::infeasible_dual);
  }
}

TEST(SaddleObjective, SignEnumerationRecoversObjective) {
  for (auto bc : {Boundary::periodic, Boundary::neumann}) {
    const auto p = small_problem(2, 2, 3, bc, 8);
    Rng rng(9);
    for (int t = 0; t < 5; ++t) {
      const Vec x = random_vector(4, rng);
      const Vec r = p.k.apply(x) - p.observed;
      double best_u = -kInf, best = -kInf;
      for (int code = 0; code < (1 << 12); ++code) {
        DualPair d{Vec(4), Vec(8)};
        for (int i = 0; i < 4; ++i) d.u[i] = (code >> i) & 1 ? 1.0 : -1.0;
        for (int i = 0; i < 8; ++i) d.v[i] = (code >> (4 + i)) & 1 ? 1.0 : -1.0;
        best = std::max(best, saddle_objective(p, x, d));
        if (code < 16) {
          DualPair du{d.u, Vec::Zero(8)};
          best_u = std::max(best_u, saddle_objective(p, x, du));
        }
      }
      EXPECT_NEAR(best, objective(p, x), 1e-12);
      EXPECT_NEAR(best_u, r.lpNorm<1>() + p.gamma1() * p.dgrad.apply(x).lpNorm<1>(), 1e-12);
    }
  }
}

TEST(Problem, SplitValidation) {
  const auto p = small_problem(3, 3, 3, Boundary::periodic, 10);
  EXPECT_NEAR(p.gamma1() + p.gamma2(), p.params.mu, 1e-17);
  EXPECT_THROW(p.with_gamma1(p.params.mu), Error);
  EXPECT_THROW(p.with_gamma1(-0.01), Error);
  EXPECT_NO_THROW(p.with_gamma1(0.0));
  TvL1Params prm;
  prm.rows = 2;
  prm.cols = 2;
  EXPECT_THROW(make_tvl1_problem(prm, Vec::Zero(5)), Error);
  prm.s1 = -1;
  EXPECT_THROW(make_tvl1_problem(prm, Vec::Zero(4)), Error);
}

TEST(BuildInner, ZeroDualGivesPreviousIterateAsCenter) {
  for (auto bc : {Boundary::periodic, Boundary::neumann}) {
    const auto p = small_problem(5, 4, 3, bc, 11);
    Rng rng(12);
    const Vec xp = random_vector(20, rng);
    for (double lambda : {1.0, 0.7}) {
      const auto ip = build_inner(p, xp, {Vec::Zero(20), Vec::Zero(40)}, lambda);
      EXPECT_LE((ip.xi - ip.b.apply(xp)).norm(), 1e-13);
      EXPECT_LE((ip.center() - xp).norm(), 1e-8);
    }
  }
}

TEST(BuildInner, NormalMetricMatchesDenseProduct) {
  for (auto bc : {Boundary::periodic, Boundary::neumann}) {
    const auto p = small_problem(3, 4, 3, bc, 13);
    const Mat b = to_dense(stacked_b(p, 0.8));
    const Mat btb = b.transpose() * b;
    const auto m = normal_metric(p, 0.8);
    for (Index i = 0; i < 12; ++i) {
      Vec e = Vec::Zero(12);
      e[i] = 1.0;
      EXPECT_LE((m.apply(e) - btb.col(i)).norm(), 1e-12);
      EXPECT_LE((m.inverse_apply(btb.col(i)) - e).norm(), 1e-7);
    }
  }
}

TEST(BuildInner, DegenerateSplit) {
  auto p = small_problem(3, 3, 1, Boundary::periodic, 14);
  p.params.r1 = p.params.r2 = 1.0;
  p.params.gamma1 = p.params.mu;  // gamma2 = 0
  const Mat b = to_dense(stacked_b(p));
  EXPECT_LE((b.topRows(9) - Mat::Identity(9, 9)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(b.bottomRows(18).cwiseAbs().maxCoeff(), 0.0);
  const auto m = normal_metric(p);
  Rng rng(15);
  const Vec x = random_vector(9, rng);
  EXPECT_LE((m.apply(x) - x).norm(), 1e-12);
}

TEST(BuildInner, EquivalentToPrimalSubproblem) {
  for (auto bc : {Boundary::periodic, Boundary::neumann}) {
    const auto p = small_problem(3, 3, 3, bc, 16);
    const auto sp = make_saddle(p);
    Rng rng(17);
    const Vec xp = random_vector(9, rng);
    const DualPair d{clamp(random_vector(9, rng), -1, 1), clamp(random_vector(18, rng), -1, 1)};
    const Vec y = d.stacked();
    const double lambda = 0.6;
    const auto ip = build_inner(p, xp, d, lambda);
    auto sub = [&](const Vec& x) {
      const Vec ax = sp.a.apply(x - xp);
      return sp.a.apply(x).dot(y) + sp.r.inner(ax, ax) / (2.0 * lambda);
    };
    auto inner = [&](const Vec& x) { return 0.5 * (ip.b.apply(x) - ip.xi).squaredNorm(); };
    const double c0 = inner(xp) - sub(xp);
    for (int t = 0; t < 10; ++t) {
      const Vec x = 3.0 * random_vector(9, rng);
      EXPECT_NEAR(inner(x) - sub(x), c0, 1e-10 * (1.0 + std::abs(inner(x))));
    }
  }
}

TEST(PrimalStep, ConvergesToExactMinimizer) {
  for (auto bc : {Boundary::periodic, Boundary::neumann}) {
    for (std::uint64_t seed = 20; seed < 25; ++seed) {
      const auto p = small_problem(2, 2, 3, bc, seed, 0.03);
      const auto sp = make_saddle(p);
      Rng rng(seed);
      const Vec xp = random_vector(4, rng);
      const Vec y = (Vec(12) << clamp(random_vector(4, rng), -1, 1),
                     clamp(0.05 * random_vector(8, rng), -1, 1))
                        .finished();
      const double lambda = 1.0;
      // gamma1 ||Dx||_1 + <Ax, y> + 1/(2 lambda) ||A(x - xp)||_R^2
      const Mat a = to_dense(sp.a);
      Mat rd = Mat::Zero(12, 12);
      for (Index i = 0; i < 12; ++i) {
        Vec e = Vec::Zero(12);
        e[i] = 1.0;
        rd.col(i) = sp.r.apply(e);
      }
      const Mat q = a.transpose() * rd * a / lambda;
      const Vec c = q * xp - a.transpose() * y;
      const Vec oracle =
          pdc::testing::tv_quadratic_minimizer(to_dense(p.dgrad), p.gamma1(), q, c);
      const auto r = sp.x_step({xp, y, lambda, 0.0});
      EXPECT_LE((r.point - oracle).norm(), 1e-4);
      const auto loose = sp.x_step({xp, y, lambda, 1e-3});
      EXPECT_LE(loose.achieved_eps, 1e-3);
      EXPECT_LE(std::sqrt((loose.point - oracle).dot(q * (loose.point - oracle))),
                std::sqrt(2.0 * 1e-3) + 1e-6);
    }
  }
}

TEST(Saddle, DualProxIsClosedForm) {
  const auto p = small_problem(3, 3, 3, Boundary::periodic, 30);
  const auto sp = make_saddle(p);
  Rng rng(31);
  const Vec c = 2.0 * random_vector(27, rng);
  const auto r = sp.g_prox(c, 1.0, sp.s, 0.0);
  EXPECT_EQ(r.achieved_eps, 0.0);
  // argmin_y <f, u> + 1/(2 tau) ||y - c||_S^2 with S = diag(I/s1, I/s2) and the box
  Vec expect(27);
  expect.head(9) = clamp(c.head(9) - p.params.s1 * p.observed, -1, 1);
  expect.tail(18) = clamp(c.tail(18), -1, 1);
  EXPECT_LE((r.point - expect).norm(), 1e-15);
  EXPECT_EQ(sp.g(Vec::Constant(27, 1.5)), kInf);
}

TEST(Saddle, InitialState) {
  const auto p = small_problem(3, 3, 3, Boundary::periodic, 32);
  const auto st = initial_state(p);
  EXPECT_EQ(st.x, p.observed);
  EXPECT_EQ(st.y_bar, Vec::Zero(27));
  EXPECT_EQ(st.k, 0);
}

TEST(Boundary, Parse) {
  EXPECT_EQ(parse_boundary("periodic"), Boundary::periodic);
  EXPECT_EQ(parse_boundary("neumann"), Boundary::neumann);
  EXPECT_THROW(parse_boundary("dirichlet"), Error);
}
