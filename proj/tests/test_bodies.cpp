#include "convexjet/bodies.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace convexjet;

namespace {

NormalData circle(int count, double turn = 0.0, BodyClass cls = BodyClass::c1) {
  NormalData d;
  d.dim = 2;
  d.cls = cls;
  for (int i = 0; i < count; ++i) {
    double t = 2.0 * M_PI * i / count + turn;
    Vec y = make_vec({std::cos(t), std::sin(t)});
    d.K.push_back(y);
    d.N.push_back(y);
  }
  return d;
}

NormalData from_points(int dim, std::vector<Vec> pts) {
  NormalData d;
  d.dim = dim;
  for (auto& p : pts) {
    d.K.push_back(p);
    d.N.push_back(p.normalized());
  }
  return d;
}

Box square(double r) { return Box{make_vec({-r, -r}), make_vec({r, r})}; }

ScalarGrid sample(const GridSpec& s, const std::function<double(const Vec&)>& f) {
  ScalarGrid g;
  g.spec = s;
  for (std::size_t i = 0; i < s.size(); ++i) g.values.push_back(f(s.node(i)));
  return g;
}

}  // namespace

TEST(Contour, MarchingSquaresCircleIsClosed) {
  auto g = sample(GridSpec::uniform(square(2.0), 81), [](const Vec& x) { return x.squaredNorm(); });
  auto c = extract_contour(g, 1.0);
  ASSERT_GT(c.vertices.size(), 50u);
  double h = g.spec.max_step();
  for (const auto& v : c.vertices) EXPECT_LT(std::abs(v.norm() - 1.0), h * h);
  std::vector<int> degree(c.vertices.size(), 0);
  for (const auto& e : c.cells) {
    EXPECT_EQ(e[2], -1);
    ++degree[e[0]];
    ++degree[e[1]];
  }
  for (int k : degree) EXPECT_EQ(k, 2);
  EXPECT_NEAR(contour_distance(c, make_vec({1.0, 0.0})), 0.0, h * h);
  EXPECT_NEAR(contour_distance(c, make_vec({0.0, 0.0})), 1.0, h * h);
}

TEST(Contour, SaddleCellsStayConsistent) {
  auto g = sample(GridSpec::uniform(square(1.0), 21), [](const Vec& x) { return x(0) * x(1); });
  auto c = extract_contour(g, 0.01);
  std::vector<int> degree(c.vertices.size(), 0);
  for (const auto& e : c.cells) {
    ++degree[e[0]];
    ++degree[e[1]];
  }
  // Interior vertices join two segments, vertices on the box boundary one.
  for (std::size_t i = 0; i < c.vertices.size(); ++i) {
    bool edge = (c.vertices[i].cwiseAbs().maxCoeff() > 1.0 - 1e-12);
    EXPECT_EQ(degree[i], edge ? 1 : 2) << c.vertices[i].transpose();
  }
}

TEST(Contour, MarchingTetrahedraSphereIsClosed) {
  Box b{make_vec({-1.5, -1.5, -1.5}), make_vec({1.5, 1.5, 1.5})};
  auto g = sample(GridSpec::uniform(b, 17), [](const Vec& x) { return x.norm(); });
  auto c = extract_contour(g, 1.0);
  double h = g.spec.max_step();
  for (const auto& v : c.vertices) EXPECT_LT(std::abs(v.norm() - 1.0), h);
  std::map<std::pair<int, int>, int> uses;
  for (const auto& t : c.cells)
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b2 = t[(e + 1) % 3];
      ++uses[{std::min(a, b2), std::max(a, b2)}];
    }
  for (const auto& [edge, k] : uses) EXPECT_EQ(k, 2);
  EXPECT_LT(contour_distance(c, make_vec({0.0, 0.0, 1.0})), h);
}

TEST(Contour, OneDimensionalCrossings) {
  Box b{make_vec({-2.0}), make_vec({2.0})};
  auto g = sample(GridSpec::uniform(b, 41), [](const Vec& x) { return std::abs(x(0)); });
  auto c = extract_contour(g, 1.0 + 1e-9);
  ASSERT_EQ(c.vertices.size(), 2u);
  EXPECT_NEAR(std::abs(c.vertices[0](0)), 1.0, 1e-6);
  EXPECT_NEAR(std::abs(c.vertices[1](0)), 1.0, 1e-6);
}

TEST(BodyConditions, CircleMarginsMatchSphereIdentities) {
  auto d = circle(64, 0.0, BodyClass::c11);
  d.M = 1.0;
  d.eta = 0.5;
  auto reps = body_condition_reports(d);
  ASSERT_EQ(reps.size(), 3u);
  EXPECT_NEAR(reps[0].margin, 1.0, 1e-12);
  // <y, x - y> = <x, y> - 1 = -|x - y|^2 / 2; the closest neighbours are worst.
  double chord = 2.0 * std::sin(M_PI / 64);
  EXPECT_NEAR(reps[1].margin, chord * chord / 2.0, 1e-12);
  for (std::size_t i = 0; i < d.K.size(); ++i)
    for (std::size_t j = 0; j < d.K.size(); ++j)
      EXPECT_NEAR(d.N[j].dot(d.K[j] - d.K[i]), 0.5 * (d.K[i] - d.K[j]).squaredNorm(), 1e-12);
  // With eta = 1/2 and M = 1 the quadratic inequality is exact equality
  // up to the factor 1 - eta/... : |x-y|^2/2 - |x-y|^2/4 >= 0.
  EXPECT_TRUE(reps[2].holds);
  EXPECT_NEAR(reps[2].margin, chord * chord / 4.0, 1e-12);
  EXPECT_TRUE(check_body_conditions(d).holds);
  d.cls = BodyClass::c1;
  EXPECT_TRUE(check_body_conditions(d).holds);
}

TEST(BodyConditions, SinglePointHolds) {
  auto d = from_points(2, {make_vec({1.0, 0.0})});
  EXPECT_TRUE(check_body_conditions(d).holds);
  d.cls = BodyClass::c11;
  EXPECT_TRUE(check_body_conditions(d).holds);
}

TEST(BodyConditions, AntipodalPairHolds) {
  auto d = from_points(2, {make_vec({1.0, 0.0}), make_vec({-1.0, 0.0})});
  auto reps = body_condition_reports(d);
  EXPECT_TRUE(reps[1].holds);
  EXPECT_NEAR(reps[1].margin, 2.0, 1e-12);
}

TEST(BodyConditions, OrthogonalPairExercisesImplication) {
  // <N(y), x - y> = 0 for y = (1, 0), x = (1, 1/2), but the normals differ.
  NormalData d;
  d.dim = 2;
  d.K = {make_vec({1.0, 0.0}), make_vec({1.0, 0.5})};
  d.N = {make_vec({1.0, 0.0}), make_vec({0.6, 0.8})};
  auto reps = body_condition_reports(d);
  EXPECT_TRUE(reps[0].holds);
  EXPECT_TRUE(reps[1].holds);
  EXPECT_FALSE(reps[2].holds);
  EXPECT_EQ(reps[2].worst_pair, std::make_pair(1, 0));
  auto r = check_body_conditions(d);
  EXPECT_EQ(r.condition, "KW1");
  EXPECT_THROW(build_body_jet(d), Refusal);
}

TEST(BodyConditions, InwardNormalsFailO) {
  NormalData d = circle(8);
  for (auto& n : d.N) n = -n;
  auto r = check_body_conditions(d);
  EXPECT_FALSE(r.holds);
  EXPECT_EQ(r.condition, "O");
}

TEST(BodyJet, AlphaRules) {
  auto d = circle(64);
  auto b = build_body_jet(d);
  EXPECT_NEAR(b.alpha, 0.5, 1e-15);
  EXPECT_TRUE(check_C(b.jet).holds);
  EXPECT_TRUE(check_CW1(b.jet).holds);

  d.cls = BodyClass::c11;
  d.M = 1.0;
  d.eta = 0.25;
  b = build_body_jet(d);
  EXPECT_NEAR(b.alpha, 9.0 / 16.0, 1e-15);
  EXPECT_TRUE(check_CW1omega(b.jet, Modulus::linear(), 0.25).holds);
  // Measured M of the circle normals is the chord ratio, exactly 1.
  d.M.reset();
  EXPECT_NEAR(body_M(d), 1.0, 1e-12);
}

TEST(BodyJet, InfeasibleAlphaRule) {
  NormalData d = from_points(2, {make_vec({0.1, 0.0})});
  d.cls = BodyClass::c11;
  d.M = 1.0;
  d.eta = 0.5;
  try {
    build_body_jet(d);
    FAIL() << "expected an infeasible alpha rule";
  } catch (const ConditionFailure& e) {
    EXPECT_NE(std::string(e.what()).find("smaller eta"), std::string::npos);
  }
}

TEST(BodyJet, TaylorGapsOnKEqualTilt) {
  // Random ellipses: the jet gap between carriers of K is -<N(y), x - y>.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int t = 0; t < 10; ++t) {
    double a = u(rng), c = u(rng);
    NormalData d;
    d.dim = 2;
    for (int i = 0; i < 24; ++i) {
      double s = 2.0 * M_PI * i / 24;
      d.K.push_back(make_vec({a * std::cos(s), c * std::sin(s)}));
      d.N.push_back(make_vec({std::cos(s) / a, std::sin(s) / c}).normalized());
    }
    ASSERT_TRUE(check_body_conditions(d).holds);
    auto b = build_body_jet(d);
    for (std::size_t i = 0; i < d.K.size(); ++i)
      for (std::size_t j = 0; j < d.K.size(); ++j)
        EXPECT_NEAR(b.jet.taylor_gap(i, j), -d.N[j].dot(d.K[i] - d.K[j]), 1e-12);
    EXPECT_TRUE(check_C(b.jet).holds);
    EXPECT_TRUE(check_CW1(b.jet).holds);
  }
}

TEST(InterpolateBody, CircleC1) {
  auto d = circle(32);
  BodyOptions o;
  o.box = square(2.0);
  o.res = 101;
  auto r = interpolate_body(d, o);
  const auto& p = r.report;
  double h = p.h;
  EXPECT_NEAR(p.F0, p.alpha, 1e-9);
  EXPECT_LT(p.max_level_error, 1e-9);
  EXPECT_GE(p.min_alignment, 0.99);
  EXPECT_LT(p.max_K_to_contour, 3.0 * h);
  EXPECT_LT(p.midpoint_max_excess, 1e-9);
  EXPECT_GT(p.reverse_margin, -h * h);
  for (const auto& v : r.contour.vertices) EXPECT_LT(std::abs(v.norm() - 1.0), 3.0 * h);
}

TEST(InterpolateBody, CircleC11) {
  auto d = circle(32, 0.0, BodyClass::c11);
  BodyOptions o;
  o.box = square(2.0);
  o.res = 101;
  auto r = interpolate_body(d, o);
  const auto& p = r.report;
  EXPECT_NEAR(p.alpha, 9.0 / 16.0, 1e-15);
  EXPECT_NEAR(p.F0, p.alpha, 1e-9);
  EXPECT_GE(p.min_alignment, 0.99);
  EXPECT_LT(p.max_K_to_contour, 3.0 * p.h);
  EXPECT_LT(p.midpoint_max_excess, 1e-9);
}

TEST(InterpolateBody, SquareCornerCloud) {
  auto d = from_points(2, {make_vec({1, 0}), make_vec({0, 1}), make_vec({-1, 0}), make_vec({0, -1})});
  BodyOptions o;
  o.box = square(2.0);
  o.res = 101;
  auto r = interpolate_body(d, o);
  const auto& p = r.report;
  EXPECT_LT(p.max_K_to_contour, 3.0 * p.h);
  EXPECT_LT(p.midpoint_max_excess, 1e-9);
  EXPECT_GE(p.min_alignment, 0.99);
}

TEST(InterpolateBody, SinglePoint) {
  auto d = from_points(2, {make_vec({1, 0})});
  BodyOptions o;
  o.box = square(3.0);
  o.res = 101;
  auto r = interpolate_body(d, o);
  Vec g = r.F.gradient(d.K[0]).normalized();
  EXPECT_LT((g - d.N[0]).norm(), 1e-2);
  EXPECT_LT(r.report.max_K_to_contour, 3.0 * r.report.h);
}

TEST(InterpolateBody, SmallBoxIsRejected) {
  // K on the box boundary: the level set meets the edge of the grid.
  auto d = circle(16);
  BodyOptions o;
  o.box = square(1.0);
  o.res = 41;
  EXPECT_THROW(interpolate_body(d, o), DomainError);
}

TEST(InterpolateBody, RotationMovesContour) {
  const double turn = 0.3;
  auto a = circle(32);
  auto b = circle(32, turn);
  BodyOptions o;
  o.box = square(2.0);
  o.res = 81;
  auto ra = interpolate_body(a, o);
  auto rb = interpolate_body(b, o);
  Eigen::Matrix2d R;
  R << std::cos(turn), -std::sin(turn), std::sin(turn), std::cos(turn);
  Contour rot = ra.contour;
  for (auto& v : rot.vertices) v = R * v;
  double h = ra.report.h, worst = 0.0;
  for (const auto& v : rot.vertices) worst = std::max(worst, contour_distance(rb.contour, v));
  for (const auto& v : rb.contour.vertices) worst = std::max(worst, contour_distance(rot, v));
  EXPECT_LT(worst, 3.0 * h);
}

TEST(InterpolateBody, OctahedronVerticesInThreeDimensions) {
  std::vector<Vec> pts;
  for (int i = 0; i < 3; ++i)
    for (double s : {-1.0, 1.0}) {
      Vec e = Vec::Zero(3);
      e(i) = s;
      pts.push_back(e);
    }
  auto d = from_points(3, pts);
  BodyOptions o;
  o.box = Box{make_vec({-2, -2, -2}), make_vec({2, 2, 2})};
  o.res = 13;
  o.convexity_pairs = 2000;
  auto r = interpolate_body(d, o);
  const auto& p = r.report;
  EXPECT_NEAR(p.F0, p.alpha, 1e-9);
  EXPECT_LT(p.max_level_error, 1e-9);
  EXPECT_LT(p.max_K_to_contour, 3.0 * p.h);
  EXPECT_GE(p.min_alignment, 0.9);
  EXPECT_GT(r.contour.cells.size(), 0u);
}
