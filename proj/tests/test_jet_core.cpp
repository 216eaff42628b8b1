#include "convexjet/jet.hpp"
#include "convexjet/modulus.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace convexjet;

namespace {

std::vector<Modulus> sample_moduli() {
  return {Modulus::linear(), Modulus::holder(0.5), Modulus::holder(0.3),
          Modulus::piecewise_linear({{0.5, 1.0}, {1.0, 1.5}, {3.0, 2.0}}),
          Modulus::piecewise_linear({{0.5, 1.0}, {2.0, 2.0}}, true)};
}

Jet1 three_point_jet() {
  Jet1 j;
  j.dim = 2;
  j.points = {make_vec({0, 0}), make_vec({1, 0}), make_vec({0, 1})};
  j.values = {0, 0.5, 0.5};
  j.grads = {make_vec({0, 0}), make_vec({1, 0}), make_vec({0, 1})};
  return j;
}

}  // namespace

TEST(Modulus, EvalExamples) {
  EXPECT_DOUBLE_EQ(Modulus::linear()(0.5), 0.5);
  EXPECT_DOUBLE_EQ(Modulus::holder(0.5)(0.25), 0.5);
  for (const auto& w : sample_moduli()) EXPECT_EQ(w(0.0), 0.0);
  EXPECT_THROW(Modulus::linear()(-1.0), DomainError);
}

TEST(Modulus, InverseExamples) {
  EXPECT_DOUBLE_EQ(Modulus::linear().inverse(0.7), 0.7);
  EXPECT_NEAR(Modulus::holder(0.5).inverse(0.5), 0.25, 1e-15);
  auto bounded = Modulus::piecewise_linear({{0.5, 0.75}, {1.0, 1.0}}, true);
  EXPECT_EQ(bounded.beta(), 1.0);
  try {
    bounded.inverse(1.5);
    FAIL() << "expected a domain error";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("beta = 1"), std::string::npos);
  }
}

TEST(Modulus, UnboundedBetaIsInfinite) {
  EXPECT_FALSE(Modulus::linear().bounded());
  EXPECT_EQ(Modulus::holder(0.5).beta(), kInf);
}

TEST(Modulus, RejectsNonConcaveKnots) {
  EXPECT_THROW(Modulus::piecewise_linear({{1.0, 1.0}, {2.0, 3.0}}), InvalidInput);
  EXPECT_THROW(Modulus::piecewise_linear({{1.0, 1.0}, {1.0, 2.0}}), InvalidInput);
  EXPECT_THROW(Modulus::holder(1.0), InvalidInput);
}

TEST(ModulusProperty, Subhomogeneity) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> t(0.0, 5.0), lam(1.0, 10.0);
  for (const auto& w : sample_moduli())
    for (int i = 0; i < 2000; ++i) {
      double x = t(rng), l = lam(rng);
      EXPECT_LE(w(l * x), l * w(x) * (1 + 1e-12) + 1e-15) << w.describe();
    }
}

TEST(ModulusProperty, InverseSuperhomogeneity) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& w : sample_moduli()) {
    double smax = w.bounded() ? 0.99 * w.beta() : 5.0;
    for (int i = 0; i < 2000; ++i) {
      double s = u(rng) * smax, mu = u(rng);
      EXPECT_LE(w.inverse(mu * s), mu * w.inverse(s) * (1 + 1e-12) + 1e-15) << w.describe();
    }
  }
}

TEST(ModulusProperty, RoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& w : sample_moduli()) {
    double smax = w.bounded() ? 0.99 * w.beta() : 5.0;
    for (int i = 0; i < 2000; ++i) {
      double s = u(rng) * smax;
      EXPECT_NEAR(w(w.inverse(s)), s, 1e-12 * std::max(s, 1e-300)) << w.describe();
    }
  }
}

TEST(JetValidate, ValidJetHasEmptyReport) { EXPECT_TRUE(validate(three_point_jet()).empty()); }

TEST(JetValidate, DuplicatePoint) {
  auto j = three_point_jet();
  j.points[2] = j.points[0];
  auto r = validate(j);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_NE(r[0].find("points not distinct"), std::string::npos);
}

TEST(JetValidate, NonFiniteGradient) {
  auto j = three_point_jet();
  j.grads[1](0) = std::nan("");
  auto r = validate(j);
  ASSERT_FALSE(r.empty());
  EXPECT_EQ(r[0], "non-finite coordinate");
  EXPECT_THROW(require_valid(j), InvalidInput);
}

TEST(JetValidate, LengthMismatch) {
  auto j = three_point_jet();
  j.values.pop_back();
  EXPECT_FALSE(validate(j).empty());
}

TEST(Grid, NodeIndexingRoundTrip) {
  auto g = GridSpec::uniform(Box{make_vec({-1, 0, 2}), make_vec({1, 3, 4})}, 5);
  g.res[1] = 4;
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(g.flatten(g.unflatten(i)), i);
  EXPECT_EQ(g.node(std::size_t{0}), g.box.lo);
  EXPECT_EQ(g.node(g.size() - 1), g.box.hi);
  EXPECT_THROW(GridSpec::uniform(g.box, 1), InvalidInput);
}

TEST(Grid, InterpolantReproducesAffine) {
  auto spec = GridSpec::uniform(Box{make_vec({-1, -1}), make_vec({1, 1})}, 9);
  ScalarGrid g{spec, {}, {}};
  for (std::size_t i = 0; i < spec.size(); ++i) {
    Vec x = spec.node(i);
    g.values.push_back(2 * x(0) - x(1) + 0.5);
  }
  GridInterpolant in(g);
  Vec q = make_vec({0.123, -0.77});
  EXPECT_NEAR(in.value(q), 2 * 0.123 + 0.77 + 0.5, 1e-13);
  EXPECT_NEAR(in.gradient(q)(0), 2.0, 1e-12);
  EXPECT_NEAR(in.gradient(q)(1), -1.0, 1e-12);
}

TEST(ExtensionField, FdConsistencyOfQuadratic) {
  auto spec = GridSpec::uniform(Box{make_vec({-1}), make_vec({1})}, 41);
  ScalarGrid g{spec, {}, {}};
  for (std::size_t i = 0; i < spec.size(); ++i) g.values.push_back(0.5 * spec.node(i).squaredNorm());
  ExtensionField f(
      spec.box, "analytic",
      [](const Vec& x) { return FieldSample{0.5 * x.squaredNorm(), x}; }, g);
  EXPECT_LT(f.fd_consistency(), 1e-12);
  EXPECT_THROW(f(make_vec({2.0})), DomainError);
}
