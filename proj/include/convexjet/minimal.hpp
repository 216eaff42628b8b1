#pragma once

#include "convexjet/conditions.hpp"

#include <Eigen/SVD>

namespace convexjet {

struct AffinePiece {
  Vec slope;
  double intercept = 0.0;

  double operator()(const Vec& x) const { return slope.dot(x) + intercept; }
};

// x -> max_i <slope_i, x> + intercept_i.
class PiecewiseAffineMax {
 public:
  struct Eval {
    double value = -kInf;
    std::vector<int> active;
    Vec subgradient;
  };

  PiecewiseAffineMax() = default;
  PiecewiseAffineMax(int dim, std::vector<AffinePiece> pieces) : dim_(dim), pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw InvalidInput("piecewise affine max needs at least one piece");
    for (const auto& p : pieces_) {
      if (p.slope.size() != dim_) throw InvalidInput("piece slope has wrong dimension");
      if (!p.slope.allFinite() || !std::isfinite(p.intercept))
        throw InvalidInput("piece coefficients must be finite");
    }
    scale_ = 1.0;
    for (const auto& p : pieces_) scale_ = std::max({scale_, std::abs(p.intercept), p.slope.norm()});
  }

  int dim() const { return dim_; }
  const std::vector<AffinePiece>& pieces() const { return pieces_; }

  double operator()(const Vec& x) const {
    double v = -kInf;
    for (const auto& p : pieces_) v = std::max(v, p(x));
    return v;
  }

  Eval eval(const Vec& x) const {
    Eval e;
    for (const auto& p : pieces_) e.value = std::max(e.value, p(x));
    double tol = 1e-12 * scale_ * (1.0 + x.norm());
    for (std::size_t i = 0; i < pieces_.size(); ++i)
      if (pieces_[i](x) >= e.value - tol) e.active.push_back(static_cast<int>(i));
    e.subgradient = pieces_[e.active.front()].slope;
    return e;
  }

  double max_slope_norm() const {
    double m = 0.0;
    for (const auto& p : pieces_) m = std::max(m, p.slope.norm());
    return m;
  }

 private:
  int dim_ = 0;
  std::vector<AffinePiece> pieces_;
  double scale_ = 1.0;
};

// Max of the tangent planes of the jet.
inline PiecewiseAffineMax build_m(const Jet1& jet) {
  std::vector<AffinePiece> pieces;
  pieces.reserve(jet.size());
  for (std::size_t i = 0; i < jet.size(); ++i)
    pieces.push_back({jet.grads[i], jet.values[i] - jet.grads[i].dot(jet.points[i])});
  return PiecewiseAffineMax(jet.dim, std::move(pieces));
}

// Largest sampled (m(x) - m(x0) - <G(x0), x - x0>) / (w(r) r) for x on spheres
// of the given radii around carrier i.
inline double differentiability_gap(const PiecewiseAffineMax& m, const Jet1& jet, std::size_t i,
                                    const Modulus& w, const std::vector<double>& radii,
                                    int directions = 64, std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const Vec& x0 = jet.points[i];
  double m0 = m(x0);
  double worst = 0.0;
  for (int d = 0; d < directions; ++d) {
    Vec u(jet.dim);
    if (jet.dim == 1) {
      u(0) = d % 2 ? -1.0 : 1.0;
    } else {
      for (int a = 0; a < jet.dim; ++a) u(a) = nd(rng);
      u.normalize();
    }
    for (double r : radii) {
      Vec x = x0 + r * u;
      worst = std::max(worst, (m(x) - m0 - jet.grads[i].dot(x - x0)) / (w(r) * r));
    }
  }
  return worst;
}

// m(x) = <g, x> + c(U x), with U having orthonormal rows spanning the
// directions along which the slopes vary.
struct Factorization {
  Vec linear_part;
  Mat basis;  // k x n
  PiecewiseAffineMax reduced;
  int k = 0;

  Vec project(const Vec& x) const {
    Vec z(k);
    for (int r = 0; r < k; ++r) z(r) = basis.row(r).dot(x);
    return z;
  }

  double operator()(const Vec& x) const { return linear_part.dot(x) + reduced(project(x)); }

  // Zero lies in the interior of the hull of the reduced slopes iff for every
  // direction some slope has positive component along it. Checked exactly
  // for k = 1 and on sampled directions otherwise.
  bool coercive(int directions = 256) const {
    if (k == 0) return true;
    auto positive_along = [&](const Vec& d) {
      double best = -kInf;
      for (const auto& p : reduced.pieces()) best = std::max(best, p.slope.dot(d));
      return best > 1e-12 * (1.0 + reduced.max_slope_norm());
    };
    if (k == 1) return positive_along(make_vec({1.0})) && positive_along(make_vec({-1.0}));
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    for (int d = 0; d < directions; ++d) {
      Vec u(k);
      for (int a = 0; a < k; ++a) u(a) = nd(rng);
      if (!positive_along(u.normalized())) return false;
    }
    return true;
  }
};

inline Factorization factorize(const PiecewiseAffineMax& m, double rank_cutoff = 1e-10) {
  const int n = m.dim();
  const auto& pieces = m.pieces();
  Factorization fac;
  fac.linear_part = Vec::Zero(n);
  for (const auto& p : pieces) fac.linear_part += p.slope;
  fac.linear_part /= static_cast<double>(pieces.size());

  Mat D(static_cast<Eigen::Index>(pieces.size()), n);
  for (std::size_t i = 0; i < pieces.size(); ++i) D.row(i) = (pieces[i].slope - fac.linear_part).transpose();
  Eigen::JacobiSVD<Mat> svd(D, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  int k = 0;
  double smax = sv.size() ? sv(0) : 0.0;
  // An absolute floor keeps round-off in the centroid from creating rank.
  double floor = 1e-14 * (1.0 + m.max_slope_norm());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rank_cutoff * smax && sv(i) > floor) ++k;
  fac.k = k;
  if (k == n) {
    fac.basis = Mat::Identity(n, n);
  } else {
    fac.basis = svd.matrixV().leftCols(k).transpose();
  }

  std::vector<AffinePiece> red;
  red.reserve(pieces.size());
  for (const auto& p : pieces) {
    Vec s(k);
    for (int r = 0; r < k; ++r) s(r) = fac.basis.row(r).dot(p.slope - fac.linear_part);
    red.push_back({s, p.intercept});
  }
  if (k == 0) {
    double c = -kInf;
    for (const auto& p : pieces) c = std::max(c, p.intercept);
    red = {{Vec(0), c}};
  }
  fac.reduced = PiecewiseAffineMax(k, std::move(red));
  return fac;
}

}  // namespace convexjet
