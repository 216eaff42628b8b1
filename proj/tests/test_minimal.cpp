#include "convexjet/minimal.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace convexjet;
using namespace fixtures;

namespace {

const Modulus lin = Modulus::linear();

// Piecewise max with a kink along x = 0 above the line y = 3/2.
double tent(const Vec& p) { return std::max({p(0) + p(1) - 1, -p(0) + p(1) - 1, p(1) / 3}); }

Vec tent_grad(const Vec& p) {
  double a = p(0) + p(1) - 1, b = -p(0) + p(1) - 1, c = p(1) / 3;
  if (a >= b && a >= c) return make_vec({1, 1});
  if (b >= c) return make_vec({-1, 1});
  return make_vec({0, 1.0 / 3});
}

Jet1 tent_jet() {
  return sample_jet(2, {make_vec({1.8, -1}), make_vec({-1.8, -1}), make_vec({0, 0}), make_vec({0, -0.6})},
                    tent, tent_grad);
}

Vec random_vec(int n, std::mt19937_64& rng, double r) {
  std::uniform_real_distribution<double> u(-r, r);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace

TEST(BuildM, AbsoluteValue) {
  auto m = build_m(line_jet({-1, 1}, {1, 1}, {-1, 1}));
  ASSERT_EQ(m.pieces().size(), 2u);
  EXPECT_EQ(m.pieces()[0].slope(0), -1);
  EXPECT_EQ(m.pieces()[0].intercept, 0);
  EXPECT_EQ(m.pieces()[1].slope(0), 1);
  EXPECT_EQ(m.pieces()[1].intercept, 0);
  for (double x : {-3.0, -0.2, 0.0, 0.7, 5.0}) EXPECT_DOUBLE_EQ(m(make_vec({x})), std::abs(x));
}

TEST(BuildM, Singleton) {
  auto m = build_m(line_jet({2}, {1}, {3}));
  ASSERT_EQ(m.pieces().size(), 1u);
  EXPECT_DOUBLE_EQ(m(make_vec({0})), 1 - 6);
}

TEST(BuildM, TentUpperRegion) {
  auto j = tent_jet();
  ASSERT_TRUE(check_C(j).holds);
  auto m = build_m(j);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(-5, 5), uy(2, 8);
  for (int i = 0; i < 500; ++i) {
    Vec p = make_vec({ux(rng), uy(rng)});
    EXPECT_NEAR(m(p), std::max(p(0) + p(1) - 1, -p(0) + p(1) - 1), 1e-12);
  }
  // All three planes meet at (0, 3/2); two carriers share the plane y/3.
  auto e = m.eval(make_vec({0, 1.5}));
  EXPECT_EQ(e.active.size(), 4u);
}

TEST(EvalM, Examples) {
  auto absm = build_m(line_jet({-1, 1}, {1, 1}, {-1, 1}));
  auto e0 = absm.eval(make_vec({0}));
  EXPECT_EQ(e0.value, 0);
  EXPECT_EQ(e0.active, (std::vector<int>{0, 1}));
  EXPECT_EQ(std::abs(e0.subgradient(0)), 1);
  auto e2 = absm.eval(make_vec({2}));
  EXPECT_EQ(e2.value, 2);
  EXPECT_EQ(e2.active, std::vector<int>{1});

  auto q = build_m(quadratic_jet({make_vec({-1}), make_vec({0}), make_vec({1})}));
  // At 0.5 the pieces of carriers 0 and 1 tie at value 0.
  auto eh = q.eval(make_vec({0.5}));
  EXPECT_EQ(eh.value, 0);
  EXPECT_EQ(eh.active, (std::vector<int>{1, 2}));
  EXPECT_EQ(eh.subgradient(0), 0);
  EXPECT_EQ(q.eval(make_vec({0.3})).active, std::vector<int>{1});
}

TEST(DifferentiabilityGap, Examples) {
  auto j = quadratic_jet({make_vec({-1}), make_vec({0}), make_vec({1})});
  auto m = build_m(j);
  std::vector<double> radii;
  for (double r = 0.01; r < 4; r *= 1.1) radii.push_back(r);
  double M = holder_seminorm(j, lin).value;
  // Oracle: m near 0 is max(-x - 1/2, 0, x - 1/2), whose ratio peaks at |x| = 1.
  double oracle = 0.0;
  for (double r : radii) oracle = std::max(oracle, std::max(0.0, r - 0.5) / (r * r));
  double gap = differentiability_gap(m, j, 1, lin, radii);
  EXPECT_NEAR(gap, oracle, 1e-12);
  EXPECT_LE(gap, 0.5 + 1e-12);
  EXPECT_LE(gap, 4 * M);

  auto affine = line_jet({0, 1, 2}, {1, 3, 5}, {2, 2, 2});
  EXPECT_NEAR(differentiability_gap(build_m(affine), affine, 1, lin, radii), 0.0, 1e-12);

  auto absj = line_jet({-1, 1}, {1, 1}, {-1, 1});
  EXPECT_EQ(differentiability_gap(build_m(absj), absj, 1, lin, {0.1, 0.5, 0.9}), 0.0);
}

TEST(Factorize, Examples) {
  auto f1 = factorize(build_m(line_jet({-1, 1}, {1, 1}, {-1, 1})));
  EXPECT_EQ(f1.k, 1);
  EXPECT_NEAR(f1.linear_part(0), 0, 1e-15);
  EXPECT_TRUE(f1.coercive());
  for (double x : {-2.0, 0.0, 3.0}) EXPECT_NEAR(f1(make_vec({x})), std::abs(x), 1e-14);

  auto m2 = PiecewiseAffineMax(2, {{make_vec({1, 0}), 0}, {make_vec({-1, 0}), 0}});
  auto f2 = factorize(m2);
  EXPECT_EQ(f2.k, 1);
  EXPECT_NEAR(std::abs(f2.basis(0, 0)), 1.0, 1e-14);
  EXPECT_NEAR(f2.basis(0, 1), 0.0, 1e-14);
  EXPECT_TRUE(f2.coercive());

  auto m3 = PiecewiseAffineMax(2, {{make_vec({1, 2}), 0.5}, {make_vec({1, 2}), -1}});
  auto f3 = factorize(m3);
  EXPECT_EQ(f3.k, 0);
  EXPECT_NEAR(f3(make_vec({2, 1})), 4.5, 1e-14);
}

TEST(MinimalProperties, RandomJets) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    int n = 1 + trial % 3;
    auto j = random_convex_jet(n, 3 + trial % 12, rng);
    auto m = build_m(j);
    double K = j.max_grad_norm();
    for (std::size_t i = 0; i < j.size(); ++i) EXPECT_NEAR(m(j.points[i]), j.values[i], 1e-12 * j.scale());
    for (int s = 0; s < 300; ++s) {
      Vec x = random_vec(n, rng, 3), z = random_vec(n, rng, 3);
      EXPECT_LE(m(0.5 * (x + z)), 0.5 * (m(x) + m(z)) + 1e-12 * j.scale());
      for (std::size_t i = 0; i < j.size(); ++i)
        EXPECT_GE(m(x), j.values[i] + j.grads[i].dot(x - j.points[i]) - 1e-13 * j.scale());
      EXPECT_LE(std::abs(m(x) - m(z)), K * (x - z).norm() * (1 + 1e-12) + 1e-12);
    }
    auto fac = factorize(m);
    EXPECT_TRUE(fac.coercive()) << "trial " << trial;
    for (int s = 0; s < 200; ++s) {
      Vec x = random_vec(n, rng, 5);
      EXPECT_NEAR(m(x), fac(x), 1e-10 * j.scale() * (1 + x.norm()));
    }
  }
}

TEST(MinimalProperties, GradientJumpBound) {
  // Jets of |x|^2/2 satisfy the eta = 1/2 inequality with M = 1.
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    int n = 1 + trial % 3;
    auto j = quadratic_jet(random_points(n, 10, 1.0, rng, 0.05));
    double M = holder_seminorm(j, lin).value;
    auto m = build_m(j);
    for (int s = 0; s < 200; ++s) {
      Vec x = random_vec(n, rng, 1.5);
      auto e = m.eval(x);
      for (std::size_t i0 = 0; i0 < j.size(); ++i0) {
        const Vec& x0 = j.points[i0];
        double base = j.values[i0] + j.grads[i0].dot(x - x0);
        for (int y : e.active) {
          double val = j.values[y] + j.grads[y].dot(x - j.points[y]);
          if (val >= base) {
            EXPECT_LE((j.grads[y] - j.grads[i0]).norm(), 4 * M * lin((x - x0).norm()) + 1e-12);
          }
        }
      }
    }
  }
}

TEST(MinimalProperties, DegenerateSubspace) {
  // Gradients vary only along (1, 1, 0): f = h(x + y) + 2z.
  std::mt19937_64 rng(23);
  auto pts = random_points(3, 12, 1.0, rng, 0.05);
  auto j = sample_jet(
      3, pts, [](const Vec& p) { double s = p(0) + p(1); return s * s + 2 * p(2); },
      [](const Vec& p) { double s = p(0) + p(1); return make_vec({2 * s, 2 * s, 2}); });
  auto fac = factorize(build_m(j));
  EXPECT_EQ(fac.k, 1);
  EXPECT_NEAR(std::abs(fac.basis(0, 0)), std::sqrt(0.5), 1e-10);
  EXPECT_NEAR(fac.linear_part(2), 2.0, 1e-12);
  EXPECT_TRUE(fac.coercive());
}

TEST(MinimalProperties, AffineSubtractionCommutes) {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 1 + trial % 3;
    auto j = random_convex_jet(n, 8, rng);
    Vec a = random_vec(n, rng, 2);
    double b = 0.7;
    Jet1 s = j;
    for (std::size_t i = 0; i < s.size(); ++i) {
      s.values[i] -= a.dot(s.points[i]) + b;
      s.grads[i] -= a;
    }
    auto fj = factorize(build_m(j));
    auto fs = factorize(build_m(s));
    EXPECT_EQ(fj.k, fs.k);
    for (int q = 0; q < 100; ++q) {
      Vec x = random_vec(n, rng, 3);
      EXPECT_NEAR(fs(x), fj(x) - a.dot(x) - b, 1e-10 * j.scale() * (1 + x.norm()));
    }
  }
}
