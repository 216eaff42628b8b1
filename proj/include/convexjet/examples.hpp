#pragma once

#include "convexjet/bodies.hpp"

// Bundled example data shared by the CLI fixture runner and the tests.
namespace convexjet::examples {

// |x| on {-2, ..., 2}; the kink at 0 gets gradient g0.
inline Jet1 five_point_abs(double g0) {
  Jet1 j;
  j.dim = 1;
  const double xs[] = {-2, -1, 0, 1, 2};
  for (double x : xs) {
    j.points.push_back(make_vec({x}));
    j.values.push_back(std::abs(x));
    j.grads.push_back(make_vec({x == 0 ? g0 : (x > 0 ? 1.0 : -1.0)}));
  }
  return j;
}

inline double tent(const Vec& p) { return std::max({p(0) + p(1) - 1, -p(0) + p(1) - 1, p(1) / 3}); }

inline Vec tent_grad(const Vec& p) {
  double a = p(0) + p(1) - 1, b = -p(0) + p(1) - 1, c = p(1) / 3;
  if (a >= b && a >= c) return make_vec({1, 1});
  if (b >= c) return make_vec({-1, 1});
  return make_vec({0, 1.0 / 3});
}

// max{x + y - 1, -x + y - 1, y/3} sampled in its zero sublevel set with y >= -1.
inline Jet1 tent_jet() {
  Jet1 j;
  j.dim = 2;
  for (const Vec& p : {make_vec({1.8, -1}), make_vec({-1.8, -1}), make_vec({0, 0}), make_vec({0, -0.6})}) {
    j.points.push_back(p);
    j.values.push_back(tent(p));
    j.grads.push_back(tent_grad(p));
  }
  return j;
}

// f = 0 and G(0, y) = (y, 0) at (0, k/4).
inline Jet1 shear_jet() {
  Jet1 j;
  j.dim = 2;
  for (int k = 0; k <= 4; ++k) {
    j.points.push_back(make_vec({0.0, k / 4.0}));
    j.values.push_back(0.0);
    j.grads.push_back(make_vec({k / 4.0, 0.0}));
  }
  return j;
}

// Unit circle with outward normals at `count` equally spaced angles.
inline NormalData circle_body(int count = 64, BodyClass cls = BodyClass::c1, double turn = 0.0) {
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

}  // namespace convexjet::examples
