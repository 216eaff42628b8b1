#pragma once

#include "convexjet/jet.hpp"
#include "convexjet/modulus.hpp"

#include <random>
#include <utility>

namespace convexjet {

struct ConditionReport {
  std::string condition;
  bool holds = true;
  std::pair<int, int> worst_pair{-1, -1};  // (x index, y index)
  double margin = kInf;                    // signed slack at the worst pair
  double constant_used = 0.0;
  double tolerance = 0.0;
  std::vector<std::string> flags;
};

inline std::string describe(const ConditionReport& r) {
  std::ostringstream os;
  os << "condition (" << r.condition << ") " << (r.holds ? "holds" : "fails");
  if (r.worst_pair.first >= 0)
    os << "; worst pair (" << r.worst_pair.first << ", " << r.worst_pair.second << ") margin " << r.margin;
  return os.str();
}

// A pipeline refused its input; carries the failed report.
class Refusal : public ConditionFailure {
 public:
  explicit Refusal(ConditionReport r) : ConditionFailure(describe(r)), report_(std::move(r)) {}
  const ConditionReport& report() const { return report_; }

 private:
  ConditionReport report_;
};

struct Seminorm {
  double value = 0.0;
  bool degenerate = false;  // fewer than two carriers
};

// M(G, C) = max |G(x) - G(y)| / w(|x - y|).
inline Seminorm holder_seminorm(const Jet1& jet, const Modulus& w) {
  if (jet.size() < 2) return {0.0, true};
  double m = 0.0;
  for (std::size_t i = 0; i < jet.size(); ++i)
    for (std::size_t j = i + 1; j < jet.size(); ++j)
      m = std::max(m, (jet.grads[i] - jet.grads[j]).norm() / w((jet.points[i] - jet.points[j]).norm()));
  return {m, false};
}

// max |f(x) - f(y) - <G(y), x - y>| / (|x - y| w(|x - y|)) over ordered pairs.
inline Seminorm whitney_seminorm(const Jet1& jet, const Modulus& w) {
  if (jet.size() < 2) return {0.0, true};
  double m = 0.0;
  for (std::size_t i = 0; i < jet.size(); ++i)
    for (std::size_t j = 0; j < jet.size(); ++j) {
      if (i == j) continue;
      double r = (jet.points[i] - jet.points[j]).norm();
      m = std::max(m, std::abs(jet.taylor_gap(i, j)) / (r * w(r)));
    }
  return {m, false};
}

inline ConditionReport check_C(const Jet1& jet) {
  ConditionReport rep;
  rep.condition = "C";
  rep.tolerance = 1e-12 * jet.scale();
  for (std::size_t i = 0; i < jet.size(); ++i)
    for (std::size_t j = 0; j < jet.size(); ++j) {
      if (i == j) continue;
      double s = jet.taylor_gap(i, j);
      if (s < rep.margin) {
        rep.margin = s;
        rep.worst_pair = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  if (jet.size() < 2) rep.margin = 0.0;
  rep.holds = rep.margin >= -rep.tolerance;
  return rep;
}

inline double default_tol_eq(const Jet1& jet) { return 1e-9 * jet.scale(); }
inline double default_tol_grad(const Jet1& jet) { return 1e-9 * (1.0 + jet.max_grad_norm()); }

// Pairs whose Taylor gap is within tol_eq of zero must carry equal gradients.
// The slack of such a pair is tol_grad - |dG|; other pairs contribute
// |gap| - tol_eq, so the margin is negative exactly at a violation.
inline ConditionReport check_CW1(const Jet1& jet, double tol_eq = -1.0, double tol_grad = -1.0) {
  if (tol_eq < 0.0) tol_eq = default_tol_eq(jet);
  if (tol_grad < 0.0) tol_grad = default_tol_grad(jet);
  ConditionReport rep;
  rep.condition = "CW1";
  rep.tolerance = 0.0;
  rep.constant_used = tol_eq;
  for (std::size_t i = 0; i < jet.size(); ++i)
    for (std::size_t j = 0; j < jet.size(); ++j) {
      if (i == j) continue;
      double gap = jet.taylor_gap(i, j);
      double s = std::abs(gap) <= tol_eq ? tol_grad - (jet.grads[i] - jet.grads[j]).norm()
                                         : std::abs(gap) - tol_eq;
      if (s < rep.margin) {
        rep.margin = s;
        rep.worst_pair = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  if (jet.size() < 2) rep.margin = 0.0;
  rep.holds = rep.margin >= 0.0;
  return rep;
}

namespace detail {

// w^{-1}(|dG| / 2M), clamped below the bound with a flag.
inline double inverse_argument(const Modulus& w, double dg, double M, bool& clamped) {
  double s = dg / (2.0 * M);
  if (s >= w.beta()) {
    clamped = true;
    s = 0.999 * w.beta();
  }
  return w.inverse(s);
}

}  // namespace detail

inline ConditionReport check_CW1omega(const Jet1& jet, const Modulus& w, double eta) {
  if (!(eta > 0.0 && eta <= 0.5)) throw InvalidInput("eta must lie in (0, 1/2]");
  ConditionReport rep;
  rep.condition = "CW1omega";
  rep.tolerance = 1e-12 * jet.scale();
  double M = holder_seminorm(jet, w).value;
  rep.constant_used = M;
  if (M == 0.0) {
    // Constant gradient: only the supporting-plane inequality remains, and it
    // forces f to be affine-consistent.
    ConditionReport c = check_C(jet);
    c.condition = rep.condition;
    c.constant_used = 0.0;
    c.flags.push_back("constant-gradient");
    return c;
  }
  bool clamped = false;
  for (std::size_t i = 0; i < jet.size(); ++i)
    for (std::size_t j = 0; j < jet.size(); ++j) {
      if (i == j) continue;
      double dg = (jet.grads[i] - jet.grads[j]).norm();
      double rhs = dg > 0.0 ? eta * dg * detail::inverse_argument(w, dg, M, clamped) : 0.0;
      double s = jet.taylor_gap(i, j) - rhs;
      if (s < rep.margin) {
        rep.margin = s;
        rep.worst_pair = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  if (clamped) rep.flags.push_back("internal-inconsistency: gradient jump beyond modulus bound");
  rep.holds = rep.margin >= -rep.tolerance;
  return rep;
}

struct EtaResult {
  bool feasible = false;
  double eta = 0.0;
  std::pair<int, int> worst_pair{-1, -1};
};

// Largest eta <= 1/2 for which check_CW1omega holds, in closed form.
inline EtaResult best_eta(const Jet1& jet, const Modulus& w) {
  EtaResult res;
  double M = holder_seminorm(jet, w).value;
  if (M == 0.0) throw InvalidInput("best_eta needs a nonconstant gradient");
  double tol = 1e-12 * jet.scale();
  double eta = 0.5;
  bool clamped = false;
  for (std::size_t i = 0; i < jet.size(); ++i)
    for (std::size_t j = 0; j < jet.size(); ++j) {
      if (i == j) continue;
      double gap = jet.taylor_gap(i, j);
      if (gap < -tol) {
        res.worst_pair = {static_cast<int>(i), static_cast<int>(j)};
        return res;
      }
      double dg = (jet.grads[i] - jet.grads[j]).norm();
      if (dg == 0.0) continue;
      double ratio = std::max(gap, 0.0) / (dg * detail::inverse_argument(w, dg, M, clamped));
      if (ratio < eta) {
        eta = ratio;
        res.worst_pair = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  res.eta = eta;
  res.feasible = eta > 0.0;
  return res;
}

struct MStarResult {
  double value = 0.0;
  bool affine = false;  // constant gradient, trivial affine solution
};

namespace detail {

inline bool mstar_feasible(const Jet1& jet, const Modulus& w, double M, double tol) {
  for (std::size_t i = 0; i < jet.size(); ++i)
    for (std::size_t j = 0; j < jet.size(); ++j) {
      if (i == j) continue;
      double dg = (jet.grads[i] - jet.grads[j]).norm();
      if (dg == 0.0) continue;
      double s = dg / (2.0 * M);
      if (s >= w.beta()) return false;
      if (jet.taylor_gap(i, j) < dg * w.inverse(s) - tol) return false;
    }
  return true;
}

}  // namespace detail

// Smallest M >= M(G, C) with gap >= |dG| w^{-1}(|dG| / 2M) for every pair,
// by bisection; +inf when some supporting-plane inequality fails.
inline MStarResult m_star(const Jet1& jet, const Modulus& w) {
  double lo = holder_seminorm(jet, w).value;
  if (lo == 0.0) return {0.0, true};
  double tol = 1e-12 * jet.scale();
  if (!check_C(jet).holds) return {kInf, false};
  if (detail::mstar_feasible(jet, w, lo, tol)) return {lo, false};
  double hi = 2.0 * lo;
  while (!detail::mstar_feasible(jet, w, hi, tol)) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) return {kInf, false};
  }
  while (hi - lo > 1e-9 * hi) {
    double mid = 0.5 * (lo + hi);
    (detail::mstar_feasible(jet, w, mid, tol) ? hi : lo) = mid;
  }
  return {hi, false};
}

struct NecessityResult {
  double min_slack = kInf;
  double M = 0.0;
  Vec worst_x, worst_y;
};

// Samples random pairs in the field box and evaluates the eta = 1/2
// inequality with M the sampled Holder seminorm of the field gradient
// (or the supplied analytic value).
inline NecessityResult verify_necessity(const ExtensionField& field, const Modulus& w,
                                        std::size_t pair_count, std::uint64_t seed = 42,
                                        std::optional<double> analytic_M = std::nullopt) {
  std::mt19937_64 rng(seed);
  const Box& b = field.box();
  std::vector<std::uniform_real_distribution<double>> axis;
  for (int i = 0; i < b.dim(); ++i) axis.emplace_back(b.lo(i), b.hi(i));
  auto draw = [&] {
    Vec x(b.dim());
    for (int i = 0; i < b.dim(); ++i) x(i) = axis[i](rng);
    return x;
  };
  struct Pair {
    Vec x, y;
    FieldSample fx, fy;
  };
  std::vector<Pair> pairs(pair_count);
  for (auto& p : pairs) {
    p.x = draw();
    p.y = draw();
  }
  parallel_for(pairs.size(), [&](std::size_t i) {
    pairs[i].fx = field(pairs[i].x);
    pairs[i].fy = field(pairs[i].y);
  });
  NecessityResult res;
  if (analytic_M) {
    res.M = *analytic_M;
  } else {
    for (const auto& p : pairs) {
      double r = (p.x - p.y).norm();
      if (r > 0.0) res.M = std::max(res.M, (p.fx.grad - p.fy.grad).norm() / w(r));
    }
  }
  for (const auto& p : pairs) {
    // Both orientations of the pair.
    for (int o = 0; o < 2; ++o) {
      const Vec& x = o ? p.y : p.x;
      const Vec& y = o ? p.x : p.y;
      const FieldSample& fx = o ? p.fy : p.fx;
      const FieldSample& fy = o ? p.fx : p.fy;
      double gap = fx.value - fy.value - fy.grad.dot(x - y);
      double dg = (fx.grad - fy.grad).norm();
      double rhs = 0.0;
      if (dg > 0.0 && res.M > 0.0) {
        double s = dg / (2.0 * res.M);
        rhs = 0.5 * dg * w.inverse(std::min(s, std::nextafter(w.beta(), 0.0)));
      }
      double slack = gap - rhs;
      if (slack < res.min_slack) {
        res.min_slack = slack;
        res.worst_x = x;
        res.worst_y = y;
      }
    }
  }
  return res;
}

}  // namespace convexjet
