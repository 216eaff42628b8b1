#pragma once

#include "convexjet/jet.hpp"

#include <functional>
#include <random>

namespace fixtures {

using convexjet::Jet1;
using convexjet::Vec;
using convexjet::make_vec;

inline Jet1 sample_jet(int dim, const std::vector<Vec>& pts, const std::function<double(const Vec&)>& f,
                       const std::function<Vec(const Vec&)>& g) {
  Jet1 j;
  j.dim = dim;
  j.points = pts;
  for (const auto& p : pts) {
    j.values.push_back(f(p));
    j.grads.push_back(g(p));
  }
  return j;
}

inline Jet1 quadratic_jet(const std::vector<Vec>& pts) {
  int n = static_cast<int>(pts.front().size());
  return sample_jet(
      n, pts, [](const Vec& x) { return 0.5 * x.squaredNorm(); }, [](const Vec& x) { return x; });
}

inline Jet1 line_jet(std::vector<double> xs, std::vector<double> f, std::vector<double> g) {
  Jet1 j;
  j.dim = 1;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    j.points.push_back(make_vec({xs[i]}));
    j.values.push_back(f[i]);
    j.grads.push_back(make_vec({g[i]}));
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

// |x| on {-2,...,2} with gradient 0 at the kink.
inline Jet1 abs_jet(double g0 = 0.0) {
  return line_jet({-2, -1, 0, 1, 2}, {2, 1, 0, 1, 2}, {-1, -1, g0, 1, 1});
}

// A smooth convex function with Lipschitz gradient: a positive definite
// quadratic plus a softplus ridge.
struct ConvexSample {
  Eigen::MatrixXd A;
  Vec b, a;
  double c = 0.0;

  double value(const Vec& x) const {
    double s = a.dot(x);
    return 0.5 * x.dot(A * x) + b.dot(x) + c * std::log1p(std::exp(s));
  }
  Vec grad(const Vec& x) const {
    double s = a.dot(x);
    Vec g = A * x + b;
    g += c / (1.0 + std::exp(-s)) * a;
    return g;
  }
  // Upper bound on the gradient Lipschitz constant.
  double lipschitz() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    return es.eigenvalues().maxCoeff() + 0.25 * c * a.squaredNorm();
  }
};

inline ConvexSample random_convex(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u(0.2, 2.0);
  ConvexSample s;
  Eigen::MatrixXd B(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) B(i, j) = nd(rng);
  s.A = B * B.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
  s.b = Vec(n);
  s.a = Vec(n);
  for (int i = 0; i < n; ++i) {
    s.b(i) = nd(rng);
    s.a(i) = nd(rng);
  }
  s.c = u(rng);
  return s;
}

inline std::vector<Vec> random_points(int n, int count, double radius, std::mt19937_64& rng,
                                      double min_sep = 1e-3) {
  std::uniform_real_distribution<double> u(-radius, radius);
  std::vector<Vec> pts;
  while (static_cast<int>(pts.size()) < count) {
    Vec p(n);
    for (int i = 0; i < n; ++i) p(i) = u(rng);
    bool ok = true;
    for (const auto& q : pts) ok &= (p - q).norm() > min_sep;
    if (ok) pts.push_back(p);
  }
  return pts;
}

inline Jet1 random_convex_jet(int n, int count, std::mt19937_64& rng, ConvexSample* out = nullptr) {
  auto s = random_convex(n, rng);
  auto pts = random_points(n, count, 1.0, rng, 0.05);
  if (out) *out = s;
  return sample_jet(
      n, pts, [&](const Vec& x) { return s.value(x); }, [&](const Vec& x) { return s.grad(x); });
}

}  // namespace fixtures
