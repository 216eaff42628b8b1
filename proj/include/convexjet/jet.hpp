#pragma once

#include "convexjet/core.hpp"

#include <array>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace convexjet {

// Values f and gradients G prescribed on a finite carrier set C.
struct Jet1 {
  int dim = 0;
  std::vector<Vec> points;
  std::vector<double> values;
  std::vector<Vec> grads;

  std::size_t size() const { return points.size(); }

  // f(x) - f(y) - <G(y), x - y> for carriers x = points[i], y = points[j].
  double taylor_gap(std::size_t i, std::size_t j) const {
    return values[i] - values[j] - grads[j].dot(points[i] - points[j]);
  }

  double diameter() const {
    double d = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j) d = std::max(d, (points[i] - points[j]).norm());
    return d;
  }

  double max_abs_value() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }

  double max_grad_norm() const {
    double m = 0.0;
    for (const auto& g : grads) m = std::max(m, g.norm());
    return m;
  }

  // Magnitude used to make pairwise tolerances relative.
  double scale() const { return 1.0 + max_abs_value() + max_grad_norm() * diameter(); }
};

inline std::vector<std::string> validate(const Jet1& jet) {
  std::vector<std::string> issues;
  if (jet.dim < 1 || jet.dim > kMaxDim) {
    issues.push_back("dimension must be between 1 and " + std::to_string(kMaxDim));
    return issues;
  }
  if (jet.points.empty()) issues.push_back("jet is empty");
  if (jet.values.size() != jet.points.size() || jet.grads.size() != jet.points.size())
    issues.push_back("points, values and grads have different lengths");
  bool shape_ok = true;
  for (const auto& p : jet.points) shape_ok &= p.size() == jet.dim;
  for (const auto& g : jet.grads) shape_ok &= g.size() == jet.dim;
  if (!shape_ok) {
    issues.push_back("vector length does not match dim");
    return issues;
  }
  bool finite = true;
  for (const auto& p : jet.points) finite &= p.allFinite();
  for (const auto& g : jet.grads) finite &= g.allFinite();
  for (double v : jet.values) finite &= std::isfinite(v);
  if (!finite) issues.push_back("non-finite coordinate");
  for (std::size_t i = 0; i < jet.points.size(); ++i) {
    for (std::size_t j = i + 1; j < jet.points.size(); ++j) {
      if ((jet.points[i] - jet.points[j]).norm() == 0.0) {
        std::ostringstream os;
        os << "points not distinct (" << i << ", " << j << ")";
        issues.push_back(os.str());
        return issues;
      }
    }
  }
  return issues;
}

inline void require_valid(const Jet1& jet) {
  auto issues = validate(jet);
  if (issues.empty()) return;
  std::string msg = "invalid jet:";
  for (const auto& s : issues) msg += " " + s + ";";
  throw InvalidInput(msg);
}

// Uniform tensor lattice over a box, res[i] >= 2 nodes along axis i.
struct GridSpec {
  Box box;
  std::array<int, kMaxDim> res{1, 1, 1};

  int dim() const { return box.dim(); }

  std::size_t size() const {
    std::size_t n = 1;
    for (int i = 0; i < dim(); ++i) n *= static_cast<std::size_t>(res[i]);
    return n;
  }

  double step(int axis) const { return (box.hi(axis) - box.lo(axis)) / (res[axis] - 1); }

  double max_step() const {
    double h = 0.0;
    for (int i = 0; i < dim(); ++i) h = std::max(h, step(i));
    return h;
  }

  std::array<int, kMaxDim> unflatten(std::size_t idx) const {
    std::array<int, kMaxDim> m{0, 0, 0};
    for (int i = 0; i < dim(); ++i) {
      m[i] = static_cast<int>(idx % res[i]);
      idx /= res[i];
    }
    return m;
  }

  std::size_t flatten(const std::array<int, kMaxDim>& m) const {
    std::size_t idx = 0;
    for (int i = dim() - 1; i >= 0; --i) idx = idx * res[i] + m[i];
    return idx;
  }

  Vec node(const std::array<int, kMaxDim>& m) const {
    Vec x(dim());
    for (int i = 0; i < dim(); ++i)
      x(i) = (m[i] == res[i] - 1) ? box.hi(i) : box.lo(i) + m[i] * step(i);
    return x;
  }

  Vec node(std::size_t idx) const { return node(unflatten(idx)); }

  static GridSpec uniform(const Box& box, int per_axis) {
    GridSpec g{box, {1, 1, 1}};
    for (int i = 0; i < box.dim(); ++i) g.res[i] = per_axis;
    g.check();
    return g;
  }

  void check() const {
    if (dim() < 1 || dim() > kMaxDim) throw InvalidInput("grid dimension out of range");
    for (int i = 0; i < dim(); ++i) {
      if (res[i] < 2) throw InvalidInput("grid resolution must be at least 2 per axis");
      if (!(box.hi(i) > box.lo(i))) throw InvalidInput("grid box must have positive extent");
    }
  }
};

struct ScalarGrid {
  GridSpec spec;
  std::vector<double> values;
  std::vector<Vec> grads;  // empty when not sampled

  bool has_grads() const { return !grads.empty(); }
};

struct FieldSample {
  double value = 0.0;
  Vec grad;
};

// A scalar field with gradient on a declared box. The final extensions are
// represented this way together with the node sampling they were built from.
class ExtensionField {
 public:
  using Evaluator = std::function<FieldSample(const Vec&)>;

  ExtensionField(Box box, std::string provenance, Evaluator eval,
                 std::optional<ScalarGrid> grid = std::nullopt, double gradient_tolerance = 0.0)
      : box_(std::move(box)),
        provenance_(std::move(provenance)),
        eval_(std::move(eval)),
        grid_(std::move(grid)),
        gradient_tolerance_(gradient_tolerance) {}

  FieldSample operator()(const Vec& x) const {
    if (!box_.contains(x, 1e-12 * (1.0 + box_.diameter())))
      throw DomainError("query outside the field box");
    return eval_(x);
  }

  double value(const Vec& x) const { return (*this)(x).value; }
  Vec gradient(const Vec& x) const { return (*this)(x).grad; }

  int dim() const { return box_.dim(); }
  const Box& box() const { return box_; }
  const std::string& provenance() const { return provenance_; }
  const std::optional<ScalarGrid>& grid() const { return grid_; }
  double gradient_tolerance() const { return gradient_tolerance_; }

  // Largest deviation between the gradient and centered differences of the
  // values, over interior grid nodes (requires a grid).
  double fd_consistency() const {
    if (!grid_) return 0.0;
    const auto& s = grid_->spec;
    double worst = 0.0;
    for (std::size_t idx = 0; idx < s.size(); ++idx) {
      auto m = s.unflatten(idx);
      bool interior = true;
      for (int i = 0; i < s.dim(); ++i) interior &= m[i] > 0 && m[i] < s.res[i] - 1;
      if (!interior) continue;
      Vec g = eval_(s.node(idx)).grad;
      for (int i = 0; i < s.dim(); ++i) {
        auto a = m, b = m;
        ++a[i];
        --b[i];
        double fd = (grid_->values[s.flatten(a)] - grid_->values[s.flatten(b)]) / (2.0 * s.step(i));
        worst = std::max(worst, std::abs(fd - g(i)));
      }
    }
    return worst;
  }

 private:
  Box box_;
  std::string provenance_;
  Evaluator eval_;
  std::optional<ScalarGrid> grid_;
  double gradient_tolerance_;
};

// Field given by an analytic function and gradient.
inline ExtensionField analytic_field(Box box, std::string name,
                                     std::function<double(const Vec&)> f,
                                     std::function<Vec(const Vec&)> grad) {
  return ExtensionField(std::move(box), std::move(name),
                        [f = std::move(f), grad = std::move(grad)](const Vec& x) {
                          return FieldSample{f(x), grad(x)};
                        });
}

// Multilinear interpolation of node values with centered-difference
// gradients; the evaluator used for grid-backed extensions.
class GridInterpolant {
 public:
  explicit GridInterpolant(ScalarGrid grid) : g_(std::move(grid)) {}

  double value(const Vec& x) const {
    const auto& s = g_.spec;
    const int k = s.dim();
    std::array<int, kMaxDim> base{0, 0, 0};
    std::array<double, kMaxDim> frac{0, 0, 0};
    for (int i = 0; i < k; ++i) {
      double u = (x(i) - s.box.lo(i)) / s.step(i);
      int c = static_cast<int>(std::floor(u));
      c = std::clamp(c, 0, s.res[i] - 2);
      base[i] = c;
      frac[i] = std::clamp(u - c, 0.0, 1.0);
    }
    double v = 0.0;
    for (int corner = 0; corner < (1 << k); ++corner) {
      double w = 1.0;
      auto m = base;
      for (int i = 0; i < k; ++i) {
        bool up = (corner >> i) & 1;
        m[i] += up;
        w *= up ? frac[i] : 1.0 - frac[i];
      }
      if (w != 0.0) v += w * g_.values[s.flatten(m)];
    }
    return v;
  }

  // Centered difference with step h clipped to the box.
  Vec gradient(const Vec& x) const {
    const auto& s = g_.spec;
    Vec grad(s.dim());
    for (int i = 0; i < s.dim(); ++i) {
      double h = s.step(i);
      Vec a = x, b = x;
      a(i) = std::min(x(i) + h, s.box.hi(i));
      b(i) = std::max(x(i) - h, s.box.lo(i));
      grad(i) = (value(a) - value(b)) / (a(i) - b(i));
    }
    return grad;
  }

  const ScalarGrid& grid() const { return g_; }

 private:
  ScalarGrid g_;
};

}  // namespace convexjet
