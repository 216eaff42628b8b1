#pragma once

#include "convexjet/jet.hpp"
#include "convexjet/modulus.hpp"

#include <mutex>
#include <unordered_map>

namespace convexjet {

// A closed set given as a finite point set or a finite union of boxes, with
// exact distance queries.
class ClosedSet {
 public:
  static ClosedSet points(int dim, std::vector<Vec> pts) {
    if (pts.empty()) throw InvalidInput("closed set must be nonempty");
    ClosedSet e;
    e.dim_ = dim;
    e.points_ = std::move(pts);
    return e;
  }

  static ClosedSet boxes(int dim, std::vector<Box> bs) {
    if (bs.empty()) throw InvalidInput("closed set must be nonempty");
    ClosedSet e;
    e.dim_ = dim;
    e.boxes_ = std::move(bs);
    return e;
  }

  int dim() const { return dim_; }
  bool is_point_set() const { return boxes_.empty(); }
  const std::vector<Vec>& point_list() const { return points_; }
  const std::vector<Box>& box_list() const { return boxes_; }

  double distance(const Vec& x) const {
    double d = kInf;
    for (const auto& p : points_) d = std::min(d, (x - p).squaredNorm());
    d = std::sqrt(d);
    for (const auto& b : boxes_) d = std::min(d, b.distance(x));
    return d;
  }

  double distance(const Box& q) const {
    double d = kInf;
    for (const auto& p : points_) d = std::min(d, q.distance(p));
    for (const auto& b : boxes_) d = std::min(d, box_distance(q, b));
    return d;
  }

  // Index of the point nearest to q (point sets only); ties go to the lowest index.
  int nearest_point(const Box& q) const {
    int best = -1;
    double bd = kInf;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      double d = q.distance(points_[i]);
      if (d < bd) {
        bd = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  int nearest_point(const Vec& x) const {
    int best = -1;
    double bd = kInf;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      double d = (x - points_[i]).squaredNorm();
      if (d < bd) {
        bd = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  bool contains_box(const Box& q) const {
    for (const auto& b : boxes_)
      if (b.contains(q.lo) && b.contains(q.hi)) return true;
    return false;
  }

 private:
  int dim_ = 0;
  std::vector<Vec> points_;
  std::vector<Box> boxes_;
};

struct WhitneyCube {
  Vec center;
  double side = 0.0;
  int generation = 0;
  std::array<std::int64_t, kMaxDim> cell{0, 0, 0};
  int nearest = -1;       // nearest point of E (point sets)
  double dist_to_E = 0.0;  // d(Q, E)

  double diameter() const { return side * std::sqrt(static_cast<double>(center.size())); }
  Box box() const { return Box{center.array() - 0.5 * side, center.array() + 0.5 * side}; }
  Box dilate(double eps0) const {
    double r = 0.5 * (1.0 + eps0) * side;
    return Box{center.array() - r, center.array() + r};
  }
};

struct PartitionTerm {
  int cube = -1;
  double weight = 0.0;
  Vec grad;
};

struct WhitneyConstants {
  int N = 0;                        // max number of dilates meeting one dilate
  int max_point_overlap = 0;        // max dilates containing a sampled point
  double A1 = 0.0;                  // sup |grad phi_j| diam(Q_j)
  double A2 = 0.0;                  // sup |D^2 phi_j| diam(Q_j)^2
  double A = 1.0;                   // max(1, A1, A2)
  double max_neighbor_ratio = 1.0;  // diameter ratio over intersecting dilates
};

namespace detail {

inline double bump(double t) { return std::abs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

// d/dt log bump
inline double bump_log_slope(double t) {
  double s = 1.0 - t * t;
  return -2.0 * t / (s * s);
}

struct CellKey {
  int generation;
  std::array<std::int64_t, kMaxDim> cell;
  bool operator==(const CellKey& o) const { return generation == o.generation && cell == o.cell; }
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.generation) * 0x9E3779B97F4A7C15ull;
    for (auto c : k.cell) h = (h ^ static_cast<std::uint64_t>(c)) * 0xBF58476D1CE4E5B9ull + (h >> 29);
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

// Dyadic Whitney cubes covering bbox minus E. A cube of diameter D is
// accepted when D <= d(Q, E); otherwise it is split. Since the parent was
// rejected, accepted cubes satisfy D <= d(Q, E) <= 4D. Cubes still rejected at
// max_generation are kept as `truncated`, and queries within collar_radius()
// of E are refused.
class CubeDecomposition {
 public:
  CubeDecomposition(ClosedSet E, Box bbox, int max_generation = 20, double eps0 = 0.125)
      : E_(std::move(E)), bbox_(std::move(bbox)), max_generation_(max_generation), eps0_(eps0) {
    if (bbox_.dim() != E_.dim()) throw InvalidInput("closed set and box dimensions differ");
    if (max_generation_ < 0 || max_generation_ > 40) throw InvalidInput("max_generation out of range");
    build();
  }

  const ClosedSet& E() const { return E_; }
  const Box& bbox() const { return bbox_; }
  int dim() const { return bbox_.dim(); }
  double eps0() const { return eps0_; }
  int max_generation() const { return max_generation_; }
  double root_side() const { return root_side_; }
  double side_at(int g) const { return std::ldexp(root_side_, -g); }
  const std::vector<WhitneyCube>& cubes() const { return cubes_; }
  const std::vector<WhitneyCube>& truncated() const { return truncated_; }
  bool empty() const { return cubes_.empty(); }

  double collar_radius() const {
    if (truncated_.empty()) return 0.0;
    return (2.0 + 0.5 * eps0_) * side_at(max_generation_) * std::sqrt(double(dim()));
  }

  // Whether partition_eval accepts x.
  bool in_domain(const Vec& x) const {
    if (!bbox_.contains(x, 1e-12 * (1.0 + bbox_.diameter()))) return false;
    double d = E_.distance(x);
    return d > 0.0 && d > collar_radius();
  }

  // Generation whose collar lies strictly inside distance r of E.
  static int generation_for_collar(const Box& bbox, double r, double eps0 = 0.125, int cap = 20) {
    double side = root_side_for(bbox);
    double rootd = side * std::sqrt(double(bbox.dim()));
    for (int g = 0; g <= cap; ++g)
      if ((2.0 + 0.5 * eps0) * std::ldexp(rootd, -g) < r) return g;
    return cap;
  }

  // Cubes whose dilate contains x, with normalized weights and gradients.
  void partition_eval(const Vec& x, std::vector<PartitionTerm>& out) const {
    out.clear();
    if (!bbox_.contains(x, 1e-12 * (1.0 + bbox_.diameter())))
      throw DomainError("partition query outside the decomposition box");
    double d = E_.distance(x);
    if (d == 0.0) throw DomainError("partition query on the closed set");
    if (d <= collar_radius()) throw DomainError("partition query inside the truncation collar");
    collect(x, d, out);
    double sum = 0.0;
    Vec gsum = Vec::Zero(dim());
    for (auto& t : out) {
      const auto& q = cubes_[t.cube];
      double r = 0.5 * (1.0 + eps0_) * q.side;
      double w = 1.0;
      Vec dlog(dim());
      for (int i = 0; i < dim(); ++i) {
        double u = (x(i) - q.center(i)) / r;
        w *= detail::bump(u);
        dlog(i) = detail::bump_log_slope(u) / r;
      }
      t.weight = w;
      t.grad = w * dlog;
      sum += w;
      gsum += t.grad;
    }
    if (!(sum > 0.0)) throw DomainError("point not covered by any Whitney cube");
    for (auto& t : out) {
      t.grad = (t.grad * sum - t.weight * gsum) / (sum * sum);
      t.weight /= sum;
    }
  }

  std::vector<PartitionTerm> partition_eval(const Vec& x) const {
    std::vector<PartitionTerm> out;
    partition_eval(x, out);
    return out;
  }

  // Index of an accepted cube containing x (closed), or -1.
  int locate(const Vec& x) const {
    double d = E_.distance(x);
    std::vector<PartitionTerm> cand;
    collect(x, d, cand, 0.0);
    return cand.empty() ? -1 : cand.front().cube;
  }

  const WhitneyConstants& constants() const {
    std::call_once(constants_once_, [this] { measure_constants(); });
    return constants_;
  }

 private:
  static double root_side_for(const Box& bbox) {
    double ext = bbox.extent().maxCoeff();
    return std::exp2(std::ceil(std::log2(std::max(ext, 1e-300))));
  }

  void build() {
    const int k = dim();
    root_lo_ = bbox_.lo;
    root_side_ = root_side_for(bbox_);
    // Enlarge the root until it satisfies d <= 4D, so the two-sided bound
    // holds for every accepted cube.
    for (int guard = 0; guard < 200; ++guard) {
      Box root{root_lo_, root_lo_.array() + root_side_};
      if (E_.distance(root) <= 4.0 * root_side_ * std::sqrt(double(k))) break;
      root_side_ *= 2.0;
    }
    std::array<std::int64_t, kMaxDim> c0{0, 0, 0};
    std::vector<std::pair<int, std::array<std::int64_t, kMaxDim>>> stack{{0, c0}};
    while (!stack.empty()) {
      auto [g, cell] = stack.back();
      stack.pop_back();
      WhitneyCube q;
      q.generation = g;
      q.side = side_at(g);
      q.cell = cell;
      q.center = Vec(k);
      for (int i = 0; i < k; ++i) q.center(i) = root_lo_(i) + (cell[i] + 0.5) * q.side;
      if (!q.dilate(eps0_).intersects(bbox_)) continue;
      Box qb = q.box();
      q.dist_to_E = E_.distance(qb);
      if (q.dist_to_E >= q.diameter()) {
        if (E_.is_point_set()) q.nearest = E_.nearest_point(qb);
        index_.emplace(detail::CellKey{g, cell}, static_cast<int>(cubes_.size()));
        cubes_.push_back(std::move(q));
        continue;
      }
      if (q.dist_to_E == 0.0 && !E_.is_point_set() && E_.contains_box(qb)) continue;
      if (g == max_generation_) {
        truncated_.push_back(std::move(q));
        continue;
      }
      for (int child = (1 << k) - 1; child >= 0; --child) {
        auto cc = cell;
        for (int i = 0; i < k; ++i) cc[i] = 2 * cell[i] + ((child >> i) & 1);
        stack.push_back({g + 1, cc});
      }
    }
  }

  // Appends accepted cubes with x in the dilate grown by `grow` (relative),
  // scanning only generations compatible with d(x, E).
  void collect(const Vec& x, double d, std::vector<PartitionTerm>& out, double grow = -1.0) const {
    const int k = dim();
    double rel = grow < 0.0 ? 0.5 * (1.0 + eps0_) : 0.5;
    double sk = std::sqrt(double(k));
    // 0.9 D <= d(x, E) <= 5.2 D for x in a dilate.
    double dmax = d / 0.9, dmin = d / 5.2;
    int g_lo = std::max(0, static_cast<int>(std::floor(std::log2(root_side_ * sk / dmax))) - 1);
    int g_hi = std::min(max_generation_, static_cast<int>(std::ceil(std::log2(root_side_ * sk / dmin))) + 1);
    for (int g = g_lo; g <= g_hi; ++g) {
      double s = side_at(g);
      std::array<std::int64_t, kMaxDim> base{0, 0, 0};
      for (int i = 0; i < k; ++i) base[i] = static_cast<std::int64_t>(std::floor((x(i) - root_lo_(i)) / s));
      int combos = 1;
      for (int i = 0; i < k; ++i) combos *= 3;
      for (int c = 0; c < combos; ++c) {
        auto cell = base;
        int cc = c;
        for (int i = 0; i < k; ++i) {
          cell[i] += cc % 3 - 1;
          cc /= 3;
        }
        auto it = index_.find(detail::CellKey{g, cell});
        if (it == index_.end()) continue;
        const auto& q = cubes_[it->second];
        double r = rel * q.side;
        bool inside = true;
        for (int i = 0; i < k && inside; ++i)
          inside = grow < 0.0 ? std::abs(x(i) - q.center(i)) < r : std::abs(x(i) - q.center(i)) <= r;
        if (inside) out.push_back({it->second, 0.0, Vec()});
      }
    }
  }

  void measure_constants() const {
    const int k = dim();
    WhitneyConstants c;
    // Overlap counting over dilates via the cell index.
    for (const auto& q : cubes_) {
      Box dq = q.dilate(eps0_);
      int count = 0;
      for (int g = std::max(0, q.generation - 3); g <= std::min(max_generation_, q.generation + 3); ++g) {
        double s = side_at(g);
        double pad = 0.5 * eps0_;
        std::array<std::int64_t, kMaxDim> lo{0, 0, 0}, hi{0, 0, 0};
        for (int i = 0; i < k; ++i) {
          lo[i] = static_cast<std::int64_t>(std::floor((dq.lo(i) - root_lo_(i)) / s - pad)) - 1;
          hi[i] = static_cast<std::int64_t>(std::floor((dq.hi(i) - root_lo_(i)) / s + pad)) + 1;
        }
        std::array<std::int64_t, kMaxDim> cell = lo;
        while (true) {
          auto it = index_.find(detail::CellKey{g, cell});
          if (it != index_.end()) {
            const auto& o = cubes_[it->second];
            if (o.dilate(eps0_).intersects(dq)) {
              ++count;
              c.max_neighbor_ratio = std::max(c.max_neighbor_ratio, o.side / q.side);
            }
          }
          int i = 0;
          for (; i < k; ++i) {
            if (++cell[i] <= hi[i]) break;
            cell[i] = lo[i];
          }
          if (i == k) break;
        }
      }
      c.N = std::max(c.N, count);
    }
    // Derivative maxima on a sample lattice inside sampled dilates.
    std::size_t stride = std::max<std::size_t>(1, cubes_.size() / 1500);
    std::vector<PartitionTerm> t0, tp, tm;
    for (std::size_t j = 0; j < cubes_.size(); j += stride) {
      const auto& q = cubes_[j];
      double r = 0.5 * (1.0 + eps0_) * q.side;
      int per = 4, total = 1;
      for (int i = 0; i < k; ++i) total *= per;
      for (int s = 0; s < total; ++s) {
        Vec x = q.center;
        int ss = s;
        for (int i = 0; i < k; ++i) {
          x(i) += r * (-0.85 + 1.7 * (ss % per) / (per - 1));
          ss /= per;
        }
        if (!in_domain(x)) continue;
        partition_eval(x, t0);
        c.max_point_overlap = std::max<int>(c.max_point_overlap, static_cast<int>(t0.size()));
        for (const auto& t : t0) c.A1 = std::max(c.A1, t.grad.norm() * cubes_[t.cube].diameter());
        double h = 1e-5 * q.side;
        for (int a = 0; a < k; ++a) {
          Vec xp = x, xm = x;
          xp(a) += h;
          xm(a) -= h;
          if (!in_domain(xp) || !in_domain(xm)) continue;
          partition_eval(xp, tp);
          partition_eval(xm, tm);
          for (const auto& t : t0) {
            Vec gp = Vec::Zero(k), gm = Vec::Zero(k);
            for (const auto& u : tp)
              if (u.cube == t.cube) gp = u.grad;
            for (const auto& u : tm)
              if (u.cube == t.cube) gm = u.grad;
            double dd = cubes_[t.cube].diameter();
            c.A2 = std::max(c.A2, (gp - gm).norm() / (2.0 * h) * dd * dd);
          }
        }
      }
    }
    c.A = std::max({1.0, c.A1, c.A2});
    constants_ = c;
  }

  ClosedSet E_;
  Box bbox_;
  int max_generation_;
  double eps0_;
  Vec root_lo_;
  double root_side_ = 1.0;
  std::vector<WhitneyCube> cubes_;
  std::vector<WhitneyCube> truncated_;
  std::unordered_map<detail::CellKey, int, detail::CellKeyHash> index_;
  mutable std::once_flag constants_once_;
  mutable WhitneyConstants constants_;
};

// sum_j P_{p_j}(x) phi_j(x) with P_p the Taylor polynomial at the carrier
// nearest to Q_j; exact (f, G) on carriers.
inline FieldSample whitney_extend_jet(const Jet1& jet, const CubeDecomposition& dec, const Vec& x,
                                      std::vector<PartitionTerm>* scratch = nullptr) {
  for (std::size_t i = 0; i < jet.size(); ++i)
    if (x == jet.points[i]) return {jet.values[i], jet.grads[i]};
  std::vector<PartitionTerm> local;
  auto& terms = scratch ? *scratch : local;
  dec.partition_eval(x, terms);
  FieldSample s{0.0, Vec::Zero(jet.dim)};
  for (const auto& t : terms) {
    int p = dec.cubes()[t.cube].nearest;
    double P = jet.values[p] + jet.grads[p].dot(x - jet.points[p]);
    s.value += P * t.weight;
    s.grad += jet.grads[p] * t.weight + P * t.grad;
  }
  return s;
}

// Same, but inside the truncation collar falls back to the Taylor polynomial
// of the nearest carrier.
inline FieldSample whitney_extend_jet_or_taylor(const Jet1& jet, const CubeDecomposition& dec,
                                                const Vec& x,
                                                std::vector<PartitionTerm>* scratch = nullptr) {
  if (dec.in_domain(x)) return whitney_extend_jet(jet, dec, x, scratch);
  int p = dec.E().nearest_point(x);
  return {jet.values[p] + jet.grads[p].dot(x - jet.points[p]), jet.grads[p]};
}

// phi = sum_j p_j phi_j, vanishing on E.
class Corrector {
 public:
  Corrector(const CubeDecomposition& dec, std::vector<double> budgets, Modulus w)
      : dec_(&dec), budgets_(std::move(budgets)), w_(std::move(w)) {
    if (budgets_.size() != dec.cubes().size()) throw InvalidInput("one budget per cube required");
    lambda_ = 0.0;
    for (std::size_t j = 0; j < budgets_.size(); ++j) {
      if (!(budgets_[j] >= 0.0)) throw InvalidInput("budgets must be nonnegative");
      double D = dec.cubes()[j].diameter();
      if (!(D > 0.0)) throw InvalidInput("zero-diameter cube");
      lambda_ = std::max(lambda_, budgets_[j] / (w_(D) * D));
    }
  }

  double lambda() const { return lambda_; }
  const std::vector<double>& budgets() const { return budgets_; }
  const CubeDecomposition& decomposition() const { return *dec_; }

  FieldSample operator()(const Vec& x, std::vector<PartitionTerm>* scratch = nullptr) const {
    FieldSample s{0.0, Vec::Zero(dec_->dim())};
    if (dec_->E().distance(x) == 0.0) return s;
    std::vector<PartitionTerm> local;
    auto& terms = scratch ? *scratch : local;
    dec_->partition_eval(x, terms);
    for (const auto& t : terms) {
      s.value += budgets_[t.cube] * t.weight;
      s.grad += budgets_[t.cube] * t.grad;
    }
    return s;
  }

  // Inside the collar the corrector is below (4/3)^2 lambda w(d) d and is
  // replaced by zero.
  FieldSample eval_or_zero(const Vec& x, std::vector<PartitionTerm>* scratch = nullptr) const {
    if (!dec_->in_domain(x)) return {0.0, Vec::Zero(dec_->dim())};
    return (*this)(x, scratch);
  }

  double value_bound(double d) const { return (16.0 / 9.0) * lambda_ * w_(d) * d; }
  double gradient_bound(double d) const {
    const auto& c = dec_->constants();
    return 4.0 * c.A * c.N / 3.0 * lambda_ * w_(d);
  }

 private:
  const CubeDecomposition* dec_;
  std::vector<double> budgets_;
  Modulus w_;
  double lambda_ = 0.0;
};

inline Corrector build_corrector(const CubeDecomposition& dec, std::vector<double> budgets, const Modulus& w) {
  return Corrector(dec, std::move(budgets), w);
}

}  // namespace convexjet
