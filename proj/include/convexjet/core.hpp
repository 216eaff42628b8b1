#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace convexjet {

inline constexpr int kMaxDim = 3;

// Stack-allocated vector of dimension 1..3.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input (CLI exit 4).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Query outside the region where an object is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A necessary condition fails on the input jet (CLI exit 3).
class ConditionFailure : public Error {
 public:
  using Error::Error;
};

// A constructed intermediate violated one of its certified bounds (CLI exit 5).
class CertificationFailure : public Error {
 public:
  CertificationFailure(const std::string& what, Vec where = Vec())
      : Error(what), where_(std::move(where)) {}
  const Vec& where() const { return where_; }

 private:
  Vec where_;
};

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

struct Box {
  Vec lo;
  Vec hi;

  int dim() const { return static_cast<int>(lo.size()); }
  Vec extent() const { return hi - lo; }
  Vec center() const { return 0.5 * (lo + hi); }
  double diameter() const { return extent().norm(); }

  bool contains(const Vec& x, double tol = 0.0) const {
    for (int i = 0; i < dim(); ++i)
      if (x(i) < lo(i) - tol || x(i) > hi(i) + tol) return false;
    return true;
  }

  double distance(const Vec& x) const {
    double s = 0.0;
    for (int i = 0; i < dim(); ++i) {
      double d = std::max({lo(i) - x(i), 0.0, x(i) - hi(i)});
      s += d * d;
    }
    return std::sqrt(s);
  }

  bool intersects(const Box& o) const {
    for (int i = 0; i < dim(); ++i)
      if (o.hi(i) < lo(i) || o.lo(i) > hi(i)) return false;
    return true;
  }

  Box expanded(double r) const {
    Box b{lo, hi};
    b.lo.array() -= r;
    b.hi.array() += r;
    return b;
  }

  static Box bounding(const std::vector<Vec>& pts) {
    if (pts.empty()) throw InvalidInput("bounding box of an empty point set");
    Box b{pts[0], pts[0]};
    for (const auto& p : pts) {
      b.lo = b.lo.cwiseMin(p);
      b.hi = b.hi.cwiseMax(p);
    }
    return b;
  }
};

inline double box_distance(const Box& a, const Box& b) {
  double s = 0.0;
  for (int i = 0; i < a.dim(); ++i) {
    double d = std::max({a.lo(i) - b.hi(i), 0.0, b.lo(i) - a.hi(i)});
    s += d * d;
  }
  return std::sqrt(s);
}

// Worker count from CONVEXJET_THREADS, else hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("CONVEXJET_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

// Runs fn(i) for i in [0, n). Each index is visited exactly once, so results
// written per index are deterministic regardless of the worker count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  unsigned workers = std::min<std::size_t>(thread_count(), std::max<std::size_t>(n / 64, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto body = [&] {
    try {
      for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) fn(i);
    } catch (...) {
      if (!failed.exchange(true)) failure = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace convexjet
