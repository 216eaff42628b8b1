#pragma once

#include "convexjet/core.hpp"

#include <sstream>
#include <utility>
#include <vector>

namespace convexjet {

// A modulus of continuity: concave, strictly increasing, zero at zero.
// Optionally capped at a finite bound beta, in which case the inverse
// is only defined on [0, beta).
class Modulus {
 public:
  enum class Kind { linear, holder, pwl };

  static Modulus linear(double bound = kInf) {
    Modulus m;
    m.kind_ = Kind::linear;
    m.set_bound(bound);
    return m;
  }

  static Modulus holder(double alpha, double bound = kInf) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
      std::ostringstream os;
      os << "holder exponent must lie in (0,1), got " << alpha;
      throw InvalidInput(os.str());
    }
    Modulus m;
    m.kind_ = Kind::holder;
    m.alpha_ = alpha;
    m.set_bound(bound);
    return m;
  }

  // Knots (t, w) with t and w strictly increasing and slopes nonincreasing.
  // A leading (0, 0) knot is added when absent. Beyond the last knot the
  // function continues with the last slope, or stays flat when `bounded`.
  static Modulus piecewise_linear(std::vector<std::pair<double, double>> knots,
                                  bool bounded = false) {
    if (knots.empty()) throw InvalidInput("pwl modulus needs at least one knot");
    if (knots.front().first != 0.0) knots.insert(knots.begin(), {0.0, 0.0});
    if (knots.front().second != 0.0) throw InvalidInput("pwl modulus must vanish at 0");
    if (knots.size() < 2) throw InvalidInput("pwl modulus needs a knot with t > 0");
    double prev_slope = kInf;
    for (std::size_t i = 1; i < knots.size(); ++i) {
      double dt = knots[i].first - knots[i - 1].first;
      double dw = knots[i].second - knots[i - 1].second;
      if (!std::isfinite(knots[i].first) || !std::isfinite(knots[i].second))
        throw InvalidInput("pwl modulus knots must be finite");
      if (!(dt > 0.0) || !(dw > 0.0))
        throw InvalidInput("pwl modulus knots must be strictly increasing in t and w");
      double slope = dw / dt;
      if (slope > prev_slope * (1.0 + 1e-12))
        throw InvalidInput("pwl modulus slopes must be nonincreasing (concavity)");
      prev_slope = slope;
    }
    Modulus m;
    m.kind_ = Kind::pwl;
    m.knots_ = std::move(knots);
    m.beta_ = bounded ? m.knots_.back().second : kInf;
    return m;
  }

  Kind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  bool bounded() const { return std::isfinite(beta_); }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

  double operator()(double t) const {
    if (t < 0.0 || std::isnan(t)) throw DomainError("modulus evaluated at negative argument");
    double w = 0.0;
    switch (kind_) {
      case Kind::linear: w = t; break;
      case Kind::holder: w = std::pow(t, alpha_); break;
      case Kind::pwl: w = eval_pwl(t); break;
    }
    return std::min(w, beta_);
  }

  double inverse(double s) const {
    if (s < 0.0 || std::isnan(s)) throw DomainError("modulus inverse at negative argument");
    if (s >= beta_) {
      std::ostringstream os;
      os << "modulus inverse undefined at " << s << ": bound beta = " << beta_;
      throw DomainError(os.str());
    }
    switch (kind_) {
      case Kind::linear: return s;
      case Kind::holder: return std::pow(s, 1.0 / alpha_);
      case Kind::pwl: return inverse_pwl(s);
    }
    return s;
  }

  std::string describe() const {
    std::ostringstream os;
    switch (kind_) {
      case Kind::linear: os << "linear"; break;
      case Kind::holder: os << "holder:" << alpha_; break;
      case Kind::pwl: os << "pwl(" << knots_.size() << " knots)"; break;
    }
    if (bounded()) os << " bounded by " << beta_;
    return os.str();
  }

 private:
  void set_bound(double bound) {
    if (!(bound > 0.0)) throw InvalidInput("modulus bound must be positive");
    beta_ = bound;
  }

  double eval_pwl(double t) const {
    const auto& k = knots_;
    if (t >= k.back().first) {
      if (bounded()) return k.back().second;
      auto& a = k[k.size() - 2];
      auto& b = k.back();
      return b.second + (t - b.first) * (b.second - a.second) / (b.first - a.first);
    }
    auto it = std::upper_bound(k.begin(), k.end(), t,
                               [](double v, const auto& kn) { return v < kn.first; });
    auto& b = *it;
    auto& a = *(it - 1);
    return a.second + (t - a.first) * (b.second - a.second) / (b.first - a.first);
  }

  double inverse_pwl(double s) const {
    const auto& k = knots_;
    if (s >= k.back().second) {
      auto& a = k[k.size() - 2];
      auto& b = k.back();
      return b.first + (s - b.second) * (b.first - a.first) / (b.second - a.second);
    }
    auto it = std::upper_bound(k.begin(), k.end(), s,
                               [](double v, const auto& kn) { return v < kn.second; });
    auto& b = *it;
    auto& a = *(it - 1);
    return a.first + (s - a.second) * (b.first - a.first) / (b.second - a.second);
  }

  Kind kind_ = Kind::linear;
  double alpha_ = 1.0;
  double beta_ = kInf;
  std::vector<std::pair<double, double>> knots_;
};

}  // namespace convexjet
