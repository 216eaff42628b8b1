#pragma once

#include "convexjet/jet.hpp"
#include "convexjet/modulus.hpp"

#include <Eigen/LU>

#include <memory>
#include <numeric>
#include <random>
#include <unordered_map>

namespace convexjet {

namespace detail {

// Revised simplex for min sum v_j l_j subject to sum l_j (s_j, 1) = (x, 1),
// l >= 0. The basis has k + 1 columns.
class EnvelopeLP {
 public:
  EnvelopeLP(int dim, const std::vector<Vec>& sites, const std::vector<double>& values)
      : k_(dim), sites_(&sites), values_(&values) {
    scale_ = 1.0;
    for (double v : values) scale_ = std::max(scale_, std::abs(v));
  }

  struct Result {
    double value = 0.0;
    Vec subgradient;
    std::vector<int> basis;
    std::vector<double> weights;
  };

  Result solve(const Vec& x, const std::vector<int>* warm = nullptr) const {
    const int r = k_ + 1;
    const int m = static_cast<int>(sites_->size());
    Eigen::VectorXd b(r);
    b.head(k_) = x;
    b(k_) = 1.0;
    std::vector<int> basis;
    bool have = false;
    if (warm && static_cast<int>(warm->size()) == r) {
      basis = *warm;
      Eigen::MatrixXd B = basis_matrix(basis);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
      if (lu.isInvertible()) {
        Eigen::VectorXd l = lu.solve(b);
        have = l.minCoeff() >= -1e-12;
      }
    }
    if (!have) {
      basis.clear();
      for (int i = 0; i < r; ++i) basis.push_back(m + i);  // artificial columns
      run(basis, b, true);
      for (int idx : basis)
        if (idx >= m) {
          Eigen::VectorXd l = basis_matrix(basis, &b).lu().solve(b);
          for (int i = 0; i < r; ++i)
            if (basis[i] >= m && l(i) > 1e-9) throw DomainError("envelope query outside the hull of the sites");
          break;
        }
      drive_out_artificials(basis, b);
    }
    run(basis, b, false);
    Eigen::MatrixXd B = basis_matrix(basis);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    Eigen::VectorXd l = lu.solve(b);
    Eigen::VectorXd c(r);
    for (int i = 0; i < r; ++i) c(i) = (*values_)[basis[i]];
    Eigen::VectorXd y = lu.transpose().solve(c);
    Result res;
    res.value = c.dot(l);
    res.subgradient = y.head(k_);
    res.basis = basis;
    res.weights.assign(l.data(), l.data() + r);
    return res;
  }

 private:
  Eigen::VectorXd column(int idx, const Eigen::VectorXd* b = nullptr) const {
    const int m = static_cast<int>(sites_->size());
    Eigen::VectorXd a = Eigen::VectorXd::Zero(k_ + 1);
    if (idx < m) {
      a.head(k_) = (*sites_)[idx];
      a(k_) = 1.0;
    } else {
      int i = idx - m;
      a(i) = (b && (*b)(i) < 0.0) ? -1.0 : 1.0;
    }
    return a;
  }

  Eigen::MatrixXd basis_matrix(const std::vector<int>& basis, const Eigen::VectorXd* b = nullptr) const {
    Eigen::MatrixXd B(k_ + 1, k_ + 1);
    for (int i = 0; i <= k_; ++i) B.col(i) = column(basis[i], b ? b : &b_cache_);
    return B;
  }

  double cost(int idx, bool phase1) const {
    const int m = static_cast<int>(sites_->size());
    if (phase1) return idx >= m ? 1.0 : 0.0;
    return idx >= m ? 0.0 : (*values_)[idx];
  }

  void run(std::vector<int>& basis, const Eigen::VectorXd& b, bool phase1) const {
    b_cache_ = b;
    const int r = k_ + 1;
    const int m = static_cast<int>(sites_->size());
    std::vector<char> in_basis(m + r, 0);
    for (int idx : basis) in_basis[idx] = 1;
    double tol = 1e-12 * (phase1 ? 1.0 : scale_);
    int degenerate = 0;
    for (int iter = 0; iter < 20000; ++iter) {
      Eigen::MatrixXd B = basis_matrix(basis);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
      Eigen::VectorXd l = lu.solve(b);
      Eigen::VectorXd c(r);
      for (int i = 0; i < r; ++i) c(i) = cost(basis[i], phase1);
      Eigen::VectorXd y = lu.transpose().solve(c);
      bool bland = degenerate > 50;
      int enter = -1;
      double best = -tol;
      for (int j = 0; j < m; ++j) {
        if (in_basis[j]) continue;
        const Vec& s = (*sites_)[j];
        double rc = cost(j, phase1) - y(k_) - y.head(k_).dot(s);
        if (rc < best) {
          best = rc;
          enter = j;
          if (bland) break;
        }
      }
      if (enter < 0) return;
      Eigen::VectorXd d = lu.solve(column(enter));
      int leave = -1;
      double theta = kInf;
      for (int i = 0; i < r; ++i) {
        if (d(i) > 1e-12) {
          double t = std::max(l(i), 0.0) / d(i);
          if (t < theta - 1e-15 || (bland && t <= theta + 1e-15 && leave >= 0 && basis[i] < basis[leave])) {
            theta = t;
            leave = i;
          }
        }
      }
      if (leave < 0) throw CertificationFailure("envelope LP unbounded");
      degenerate = theta <= 1e-15 ? degenerate + 1 : 0;
      in_basis[basis[leave]] = 0;
      basis[leave] = enter;
      in_basis[enter] = 1;
    }
    throw CertificationFailure("envelope LP did not converge");
  }

  void drive_out_artificials(std::vector<int>& basis, const Eigen::VectorXd& b) const {
    const int r = k_ + 1;
    const int m = static_cast<int>(sites_->size());
    b_cache_ = b;
    for (int i = 0; i < r; ++i) {
      if (basis[i] < m) continue;
      Eigen::MatrixXd B = basis_matrix(basis);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
      int pick = -1;
      double best = 1e-9;
      for (int j = 0; j < m; ++j) {
        if (std::find(basis.begin(), basis.end(), j) != basis.end()) continue;
        double piv = std::abs(lu.solve(column(j))(i));
        if (piv > best) {
          best = piv;
          pick = j;
          if (piv > 0.1) break;
        }
      }
      if (pick < 0) throw CertificationFailure("envelope sites do not span the query dimension");
      basis[i] = pick;
    }
  }

  int k_;
  const std::vector<Vec>* sites_;
  const std::vector<double>* values_;
  double scale_ = 1.0;
  mutable Eigen::VectorXd b_cache_;
};

// Lower hull of lifted planar points by quickhull in 3D.
class LowerHull2D {
 public:
  LowerHull2D(const std::vector<Vec>& sites, const std::vector<double>& values, std::uint64_t seed = 0x5eed) {
    const int n = static_cast<int>(sites.size());
    Box bb = Box::bounding(sites);
    lo_ = bb.lo;
    ext_ = bb.extent();
    for (int i = 0; i < 2; ++i)
      if (!(ext_(i) > 0.0)) throw CertificationFailure("planar sites are collinear");
    double vmin = *std::min_element(values.begin(), values.end());
    double vmax = *std::max_element(values.begin(), values.end());
    double vr = vmax - vmin > 0.0 ? vmax - vmin : 1.0;
    pts_.resize(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      pts_[i] = Eigen::Vector3d((sites[i](0) - lo_(0)) / ext_(0), (sites[i](1) - lo_(1)) / ext_(1),
                                (values[i] - vmin) / vr + 1e-11 * u(rng));
    }
    build();
    index_facets();
  }

  // Vertex indices of the lower facet containing x and barycentric weights.
  bool locate(const Vec& x, std::array<int, 3>& tri, std::array<double, 3>& bary) const {
    Eigen::Vector2d q((x(0) - lo_(0)) / ext_(0), (x(1) - lo_(1)) / ext_(1));
    int cx = std::clamp(static_cast<int>(std::floor(q(0) * nb_)), 0, nb_ - 1);
    int cy = std::clamp(static_cast<int>(std::floor(q(1) * nb_)), 0, nb_ - 1);
    double best = -kInf;
    for (int f : buckets_[cy * nb_ + cx]) {
      const auto& F = faces_[f];
      std::array<double, 3> b{};
      barycentric(F.v, q, b);
      double mn = std::min({b[0], b[1], b[2]});
      if (mn > best) {
        best = mn;
        tri = F.v;
        bary = b;
      }
    }
    return best >= -1e-9;
  }

  std::size_t facet_count() const { return lower_.size(); }
  // Points skipped because their visible region stayed degenerate.
  const std::vector<int>& dropped() const { return dropped_; }

 private:
  struct Face {
    std::array<int, 3> v;
    std::array<int, 3> nb;  // face across edge (v[e], v[e+1])
    Eigen::Vector3d n;
    double off = 0.0;
    bool alive = true;
    std::vector<int> outside;
  };

  double dist(const Face& f, int p) const { return f.n.dot(pts_[p]) - f.off; }

  int make_face(int a, int b, int c) {
    Face f;
    f.v = {a, b, c};
    f.nb = {-1, -1, -1};
    Eigen::Vector3d n = (pts_[b] - pts_[a]).cross(pts_[c] - pts_[a]);
    double len = n.norm();
    f.n = len > 0.0 ? Eigen::Vector3d(n / len) : n;
    f.off = f.n.dot(pts_[a]);
    faces_.push_back(std::move(f));
    return static_cast<int>(faces_.size()) - 1;
  }

  void build() {
    const int n = static_cast<int>(pts_.size());
    if (n < 4) throw CertificationFailure("too few sites for a planar hull");
    const double eps = 1e-14;
    // Initial tetrahedron from extreme points.
    int i0 = 0;
    for (int i = 1; i < n; ++i)
      if (pts_[i](0) < pts_[i0](0)) i0 = i;
    int i1 = i0;
    for (int i = 0; i < n; ++i)
      if ((pts_[i] - pts_[i0]).norm() > (pts_[i1] - pts_[i0]).norm()) i1 = i;
    Eigen::Vector3d d01 = (pts_[i1] - pts_[i0]).normalized();
    int i2 = i0;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = (pts_[i] - pts_[i0]).cross(d01).norm();
      if (d > best) {
        best = d;
        i2 = i;
      }
    }
    Eigen::Vector3d nrm = (pts_[i1] - pts_[i0]).cross(pts_[i2] - pts_[i0]).normalized();
    int i3 = i0;
    best = 0.0;
    for (int i = 0; i < n; ++i) {
      double d = std::abs(nrm.dot(pts_[i] - pts_[i0]));
      if (d > best) {
        best = d;
        i3 = i;
      }
    }
    if (best <= eps || i2 == i0) throw CertificationFailure("lifted sites are degenerate");
    if (nrm.dot(pts_[i3] - pts_[i0]) > 0.0) std::swap(i1, i2);
    // Faces oriented outward (i3 lies below the plane of i0, i1, i2).
    int f0 = make_face(i0, i1, i2);
    int f1 = make_face(i0, i3, i1);
    int f2 = make_face(i1, i3, i2);
    int f3 = make_face(i2, i3, i0);
    link_all({f0, f1, f2, f3});
    std::vector<char> used(n, 0);
    used[i0] = used[i1] = used[i2] = used[i3] = 1;
    for (int p = 0; p < n; ++p) {
      if (used[p]) continue;
      assign(p, {f0, f1, f2, f3}, eps);
    }
    std::vector<int> stack{f0, f1, f2, f3};
    std::vector<int> visible, newfaces;
    std::vector<char> vis_mark;
    while (!stack.empty()) {
      int fi = stack.back();
      stack.pop_back();
      if (!faces_[fi].alive || faces_[fi].outside.empty()) continue;
      // Farthest outside point.
      int p = -1;
      double pd = -kInf;
      for (int q : faces_[fi].outside) {
        double d = dist(faces_[fi], q);
        if (d > pd) {
          pd = d;
          p = q;
        }
      }
      // Visible region by flood fill. A pinched region (horizon not a simple
      // cycle) is regrown with a slightly negative threshold; a point that
      // still fails is dropped and counted.
      struct HEdge {
        int a, b, other;
      };
      std::vector<HEdge> horizon;
      bool simple = false;
      for (double thr : {eps, -1e-13, -1e-12, -1e-11}) {
        visible.clear();
        vis_mark.assign(faces_.size(), 0);
        visible.push_back(fi);
        vis_mark[fi] = 1;
        for (std::size_t h = 0; h < visible.size(); ++h) {
          const Face& F = faces_[visible[h]];
          for (int e = 0; e < 3; ++e) {
            int g = F.nb[e];
            if (g < 0 || vis_mark[g]) continue;
            if (dist(faces_[g], p) > thr) {
              vis_mark[g] = 1;
              visible.push_back(g);
            }
          }
        }
        horizon.clear();
        for (int f : visible) {
          const Face& F = faces_[f];
          for (int e = 0; e < 3; ++e)
            if (!vis_mark[F.nb[e]]) horizon.push_back({F.v[e], F.v[(e + 1) % 3], F.nb[e]});
        }
        simple = simple_cycle(horizon);
        if (simple) break;
      }
      if (!simple) {
        auto& out = faces_[fi].outside;
        out.erase(std::remove(out.begin(), out.end(), p), out.end());
        dropped_.push_back(p);
        stack.push_back(fi);
        continue;
      }
      newfaces.clear();
      std::unordered_map<int, int> face_of_start;
      for (const auto& h : horizon) {
        int nf = make_face(h.a, h.b, p);
        vis_mark.push_back(0);
        newfaces.push_back(nf);
        face_of_start[h.a] = nf;
        Face& O = faces_[h.other];
        for (int e = 0; e < 3; ++e)
          if (O.v[e] == h.b && O.v[(e + 1) % 3] == h.a) O.nb[e] = nf;
        faces_[nf].nb[0] = h.other;
      }
      for (int nf : newfaces) {
        Face& F = faces_[nf];
        auto it = face_of_start.find(F.v[1]);
        if (it == face_of_start.end()) throw CertificationFailure("hull horizon is not closed");
        F.nb[1] = it->second;
        faces_[it->second].nb[2] = nf;
      }
      std::vector<int> orphans;
      for (int f : visible) {
        faces_[f].alive = false;
        for (int q : faces_[f].outside)
          if (q != p) orphans.push_back(q);
        faces_[f].outside.clear();
        faces_[f].outside.shrink_to_fit();
      }
      for (int q : orphans) assign(q, newfaces, eps);
      for (int nf : newfaces)
        if (!faces_[nf].outside.empty()) stack.push_back(nf);
    }
  }

  template <class E>
  static bool simple_cycle(const std::vector<E>& horizon) {
    if (horizon.size() < 3) return false;
    std::unordered_map<int, int> next;
    for (const auto& h : horizon)
      if (!next.emplace(h.a, h.b).second) return false;
    int v = horizon.front().a;
    for (std::size_t step = 0; step < horizon.size(); ++step) {
      auto it = next.find(v);
      if (it == next.end()) return false;
      v = it->second;
      if (v == horizon.front().a) return step + 1 == horizon.size();
    }
    return false;
  }

  void link_all(const std::vector<int>& fs) {
    for (int a : fs)
      for (int e = 0; e < 3; ++e) {
        int u = faces_[a].v[e], w = faces_[a].v[(e + 1) % 3];
        for (int b : fs) {
          if (a == b) continue;
          for (int g = 0; g < 3; ++g)
            if (faces_[b].v[g] == w && faces_[b].v[(g + 1) % 3] == u) faces_[a].nb[e] = b;
        }
      }
  }

  void assign(int p, const std::vector<int>& candidates, double eps) {
    int best = -1;
    double bd = eps;
    for (int f : candidates) {
      double d = dist(faces_[f], p);
      if (d > bd) {
        bd = d;
        best = f;
      }
    }
    if (best >= 0) faces_[best].outside.push_back(p);
  }

  void barycentric(const std::array<int, 3>& v, const Eigen::Vector2d& q, std::array<double, 3>& b) const {
    Eigen::Vector2d a = pts_[v[0]].head<2>(), p1 = pts_[v[1]].head<2>(), p2 = pts_[v[2]].head<2>();
    double det = (p1 - a)(0) * (p2 - a)(1) - (p1 - a)(1) * (p2 - a)(0);
    double l1 = ((q - a)(0) * (p2 - a)(1) - (q - a)(1) * (p2 - a)(0)) / det;
    double l2 = ((p1 - a)(0) * (q - a)(1) - (p1 - a)(1) * (q - a)(0)) / det;
    b = {1.0 - l1 - l2, l1, l2};
  }

  void index_facets() {
    std::vector<Face> lower;
    for (auto& f : faces_) {
      if (!f.alive) continue;
      Eigen::Vector2d a = pts_[f.v[0]].head<2>(), b = pts_[f.v[1]].head<2>(), c = pts_[f.v[2]].head<2>();
      double area = (b - a)(0) * (c - a)(1) - (b - a)(1) * (c - a)(0);
      // Outward normal pointing down and a non-degenerate shadow.
      if (f.n(2) < -1e-9 && std::abs(area) > 1e-15) lower.push_back(std::move(f));
    }
    faces_ = std::move(lower);
    lower_.resize(faces_.size());
    std::iota(lower_.begin(), lower_.end(), 0);
    nb_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(faces_.size()) / 2.0)));
    buckets_.assign(static_cast<std::size_t>(nb_) * nb_, {});
    const double pad = 1e-9;
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      double x0 = kInf, x1 = -kInf, y0 = kInf, y1 = -kInf;
      for (int v : faces_[f].v) {
        x0 = std::min(x0, pts_[v](0));
        x1 = std::max(x1, pts_[v](0));
        y0 = std::min(y0, pts_[v](1));
        y1 = std::max(y1, pts_[v](1));
      }
      int cx0 = std::clamp(static_cast<int>(std::floor((x0 - pad) * nb_)), 0, nb_ - 1);
      int cx1 = std::clamp(static_cast<int>(std::floor((x1 + pad) * nb_)), 0, nb_ - 1);
      int cy0 = std::clamp(static_cast<int>(std::floor((y0 - pad) * nb_)), 0, nb_ - 1);
      int cy1 = std::clamp(static_cast<int>(std::floor((y1 + pad) * nb_)), 0, nb_ - 1);
      for (int cy = cy0; cy <= cy1; ++cy)
        for (int cx = cx0; cx <= cx1; ++cx) buckets_[cy * nb_ + cx].push_back(static_cast<int>(f));
    }
  }

  Vec lo_, ext_;
  std::vector<Eigen::Vector3d> pts_;
  std::vector<Face> faces_;
  std::vector<int> lower_;
  int nb_ = 1;
  std::vector<std::vector<int>> buckets_;
  std::vector<int> dropped_;
};

}  // namespace detail

enum class EnvelopeMethod { automatic, hull, lp };

inline std::string to_string(EnvelopeMethod m) {
  switch (m) {
    case EnvelopeMethod::hull: return "hull";
    case EnvelopeMethod::lp: return "lp";
    default: return "auto";
  }
}

// Greatest convex function below the values at finitely many sites,
// evaluated anywhere in the hull of the sites. It is piecewise linear.
class LowerEnvelope {
 public:
  LowerEnvelope(int dim, std::vector<Vec> sites, std::vector<double> values,
                EnvelopeMethod method = EnvelopeMethod::automatic)
      : dim_(dim), sites_(std::move(sites)), values_(std::move(values)) {
    if (sites_.size() != values_.size() || sites_.empty()) throw InvalidInput("envelope needs matching sites and values");
    if (dim_ < 1 || dim_ > kMaxDim) throw InvalidInput("envelope dimension out of range");
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidInput("envelope input must be finite");
    if (method == EnvelopeMethod::automatic) method = dim_ == 3 ? EnvelopeMethod::lp : EnvelopeMethod::hull;
    method_ = method;
    lp_ = std::make_unique<detail::EnvelopeLP>(dim_, sites_, values_);
    if (method_ == EnvelopeMethod::hull) {
      if (dim_ == 1) {
        build_1d();
      } else if (dim_ == 2) {
        // A failed certification is retried with fresh jitter before falling
        // back to the exact LP.
        method_ = EnvelopeMethod::lp;
        for (std::uint64_t seed : {0x5eedULL, 0x5eedULL + 1, 0x5eedULL + 2}) {
          try {
            hull2_ = std::make_unique<detail::LowerHull2D>(sites_, values_, seed);
            check_dropped();
            method_ = EnvelopeMethod::hull;
            break;
          } catch (const CertificationFailure&) {
            hull2_.reset();
          }
        }
      } else {
        method_ = EnvelopeMethod::lp;
      }
    }
  }

  LowerEnvelope(LowerEnvelope&&) = default;
  LowerEnvelope& operator=(LowerEnvelope&&) = default;

  EnvelopeMethod method() const { return method_; }
  int dim() const { return dim_; }
  const std::vector<Vec>& sites() const { return sites_; }
  const std::vector<double>& values() const { return values_; }

  double operator()(const Vec& x) const {
    if (method_ == EnvelopeMethod::hull && dim_ == 1) return eval_1d(x(0));
    if (method_ == EnvelopeMethod::hull && dim_ == 2) {
      std::array<int, 3> tri{};
      std::array<double, 3> b{};
      if (hull2_->locate(x, tri, b)) {
        double v = 0.0;
        for (int i = 0; i < 3; ++i) v += b[i] * values_[tri[i]];
        return v;
      }
    }
    return lp_->solve(x).value;
  }

  // Exact LP evaluation regardless of the construction method.
  double lp_value(const Vec& x) const { return lp_->solve(x).value; }

 private:
  void build_1d() {
    std::vector<int> order(sites_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return sites_[a](0) < sites_[b](0) || (sites_[a](0) == sites_[b](0) && values_[a] < values_[b]);
    });
    for (int i : order) {
      double x = sites_[i](0), v = values_[i];
      if (!hx_.empty() && hx_.back() == x) continue;  // keep the lowest value per abscissa
      while (hx_.size() >= 2) {
        std::size_t n = hx_.size();
        double cross = (hx_[n - 1] - hx_[n - 2]) * (v - hv_[n - 2]) - (hv_[n - 1] - hv_[n - 2]) * (x - hx_[n - 2]);
        if (cross <= 0.0) {
          hx_.pop_back();
          hv_.pop_back();
        } else {
          break;
        }
      }
      hx_.push_back(x);
      hv_.push_back(v);
    }
  }

  // A skipped site must not sit below the triangulated surface.
  void check_dropped() const {
    double scale = 1.0;
    for (double v : values_) scale = std::max(scale, std::abs(v));
    for (int i : hull2_->dropped()) {
      std::array<int, 3> tri{};
      std::array<double, 3> b{};
      if (!hull2_->locate(sites_[i], tri, b)) throw CertificationFailure("dropped hull site not covered");
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += b[k] * values_[tri[k]];
      if (v > values_[i] + 1e-9 * scale) throw CertificationFailure("dropped hull site lies below the surface");
    }
  }

  double eval_1d(double x) const {
    double tol = 1e-12 * (1.0 + std::abs(hx_.back() - hx_.front()));
    if (x < hx_.front() - tol || x > hx_.back() + tol) throw DomainError("envelope query outside the hull of the sites");
    if (hx_.size() == 1) return hv_[0];
    auto it = std::upper_bound(hx_.begin(), hx_.end(), x);
    std::size_t j = std::clamp<std::size_t>(it - hx_.begin(), 1, hx_.size() - 1);
    double t = (x - hx_[j - 1]) / (hx_[j] - hx_[j - 1]);
    if (t <= 0.0) return hv_[j - 1];
    if (t >= 1.0) return hv_[j];
    return hv_[j - 1] + t * (hv_[j] - hv_[j - 1]);
  }

  int dim_;
  std::vector<Vec> sites_;
  std::vector<double> values_;
  EnvelopeMethod method_ = EnvelopeMethod::hull;
  std::unique_ptr<detail::EnvelopeLP> lp_;
  std::unique_ptr<detail::LowerHull2D> hull2_;
  std::vector<double> hx_, hv_;
};

struct EnvelopeResult {
  ScalarGrid envelope;
  std::vector<char> contact;  // envelope equals input within tolerance
  EnvelopeMethod method = EnvelopeMethod::hull;
};

inline std::vector<Vec> grid_nodes(const GridSpec& s) {
  std::vector<Vec> nodes(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) nodes[i] = s.node(i);
  return nodes;
}

// Envelope of the node values, evaluated back at the nodes. Values are
// clamped to the input so that envelope <= input holds exactly.
inline EnvelopeResult conv_envelope_grid(const ScalarGrid& g, EnvelopeMethod method = EnvelopeMethod::automatic) {
  g.spec.check();
  if (g.values.size() != g.spec.size()) throw InvalidInput("grid values do not match the resolution");
  LowerEnvelope env(g.spec.dim(), grid_nodes(g.spec), g.values, method);
  EnvelopeResult res;
  res.method = env.method();
  res.envelope.spec = g.spec;
  res.envelope.values.resize(g.values.size());
  double scale = 1.0;
  for (double v : g.values) scale = std::max(scale, std::abs(v));
  parallel_for(g.values.size(), [&](std::size_t i) {
    res.envelope.values[i] = std::min(env(env.sites()[i]), g.values[i]);
  });
  res.contact.resize(g.values.size());
  for (std::size_t i = 0; i < g.values.size(); ++i)
    res.contact[i] = res.envelope.values[i] >= g.values[i] - 1e-12 * scale;
  return res;
}

inline EnvelopeResult conv_envelope_1d(const ScalarGrid& g) {
  if (g.spec.dim() != 1) throw InvalidInput("conv_envelope_1d needs a one-dimensional grid");
  return conv_envelope_grid(g, EnvelopeMethod::hull);
}

// Minimum of sum l_j v_j over all simplices of nodes containing x,
// including lower-dimensional faces. Exhaustive; test use only.
inline double caratheodory_oracle(const std::vector<Vec>& nodes, const std::vector<double>& values, const Vec& x) {
  const int k = static_cast<int>(x.size());
  const int m = static_cast<int>(nodes.size());
  const double tol = 1e-12;
  double best = kInf;
  auto consider = [&](const int* idx, int cnt) {
    // Solve for barycentric coordinates of x in the simplex idx[0..cnt).
    Eigen::MatrixXd A(k + 1, cnt);
    Eigen::VectorXd b(k + 1);
    for (int c = 0; c < cnt; ++c) {
      A.block(0, c, k, 1) = nodes[idx[c]];
      A(k, c) = 1.0;
    }
    b.head(k) = x;
    b(k) = 1.0;
    Eigen::VectorXd l;
    if (cnt == k + 1) {
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
      if (std::abs(A.determinant()) < 1e-300) return;
      l = lu.solve(b);
    } else {
      l = A.colPivHouseholderQr().solve(b);
      if ((A * l - b).norm() > tol) return;
    }
    if (l.minCoeff() < -tol) return;
    double v = 0.0;
    for (int c = 0; c < cnt; ++c) v += l(c) * values[idx[c]];
    best = std::min(best, v);
  };
  int idx[4];
  for (int a = 0; a < m; ++a) {
    idx[0] = a;
    if ((nodes[a] - x).norm() <= tol) best = std::min(best, values[a]);
    for (int b = a + 1; b < m; ++b) {
      idx[1] = b;
      if (k == 1) {
        double lo = std::min(nodes[a](0), nodes[b](0)), hi = std::max(nodes[a](0), nodes[b](0));
        if (x(0) >= lo && x(0) <= hi) consider(idx, 2);
        continue;
      }
      consider(idx, 2);
      for (int c = b + 1; c < m; ++c) {
        idx[2] = c;
        if (k == 2) {
          // Quick orientation rejection before the solve.
          auto orient = [](const Vec& p, const Vec& q, const Vec& r) {
            return (q(0) - p(0)) * (r(1) - p(1)) - (q(1) - p(1)) * (r(0) - p(0));
          };
          double o = orient(nodes[a], nodes[b], nodes[c]);
          double ref = (nodes[b] - nodes[a]).squaredNorm() + (nodes[c] - nodes[a]).squaredNorm();
          if (std::abs(o) <= 1e-12 * ref) continue;  // collinear; covered by the pairs
          double s1 = orient(nodes[a], nodes[b], x) / o, s2 = orient(nodes[b], nodes[c], x) / o,
                 s3 = orient(nodes[c], nodes[a], x) / o;
          if (s1 < -tol || s2 < -tol || s3 < -tol) continue;
          double v = s2 * values[a] + s3 * values[b] + s1 * values[c];
          best = std::min(best, v);
          continue;
        }
        consider(idx, 3);
        for (int d = c + 1; d < m; ++d) {
          idx[3] = d;
          consider(idx, 4);
        }
      }
    }
  }
  if (!std::isfinite(best)) throw DomainError("oracle query outside the hull of the nodes");
  return best;
}

// The same minimum for k <= 2, enumerated in order of w_i = v_i - <g, p_i - x>.
// For a simplex containing x, sum l_i v_i = sum l_i w_i for every g, so a
// simplex whose smallest w is not below the incumbent cannot improve it. The
// result is the exact minimum (to `tol` times the value scale) whatever g is;
// a subgradient of the envelope at x only makes the search short.
inline double caratheodory_oracle(const std::vector<Vec>& nodes, const std::vector<double>& values, const Vec& x,
                                  const Vec& g, double tol = 1e-12) {
  const int k = static_cast<int>(x.size());
  if (k > 2) return caratheodory_oracle(nodes, values, x);
  const int m = static_cast<int>(nodes.size());
  double scale = 1.0;
  for (double v : values) scale = std::max(scale, std::abs(v));
  const double vtol = tol * scale, xtol = 1e-12;
  std::vector<double> w(m);
  for (int i = 0; i < m; ++i) w[i] = values[i] - g.dot(nodes[i] - x);
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return w[a] < w[b]; });
  auto orient = [](const Vec& p, const Vec& q, const Vec& r) {
    return (q(0) - p(0)) * (r(1) - p(1)) - (q(1) - p(1)) * (r(0) - p(0));
  };
  // Value on segment ab if x lies on it.
  auto segment = [&](int a, int b) {
    Vec d = nodes[b] - nodes[a];
    double len2 = d.squaredNorm();
    if (len2 == 0.0) return kInf;
    double t = d.dot(x - nodes[a]) / len2;
    if (t < -xtol || t > 1 + xtol) return kInf;
    if ((nodes[a] + t * d - x).norm() > xtol * (1.0 + std::sqrt(len2))) return kInf;
    t = std::clamp(t, 0.0, 1.0);
    return (1 - t) * values[a] + t * values[b];
  };
  double best = kInf;
  for (int ia = 0; ia < m; ++ia) {
    const int a = order[ia];
    if (w[a] >= best - vtol) break;
    if ((nodes[a] - x).norm() <= xtol) best = std::min(best, values[a]);
    for (int ib = ia + 1; ib < m && w[a] < best - vtol; ++ib) {
      const int b = order[ib];
      best = std::min(best, segment(a, b));
      if (k == 1) continue;
      for (int ic = ib + 1; ic < m; ++ic) {
        const int c = order[ic];
        double o = orient(nodes[a], nodes[b], nodes[c]);
        double ref = (nodes[b] - nodes[a]).squaredNorm() + (nodes[c] - nodes[a]).squaredNorm();
        if (std::abs(o) <= 1e-12 * ref) continue;
        double s1 = orient(nodes[a], nodes[b], x) / o, s2 = orient(nodes[b], nodes[c], x) / o,
               s3 = orient(nodes[c], nodes[a], x) / o;
        if (s1 < -xtol || s2 < -xtol || s3 < -xtol) continue;
        best = std::min(best, s2 * values[a] + s3 * values[b] + s1 * values[c]);
        if (w[a] >= best - vtol) break;
      }
    }
  }
  if (!std::isfinite(best)) throw DomainError("oracle query outside the hull of the nodes");
  return best;
}

// Nodes that touch the one-dimensional envelope along every grid line
// through them. Every vertex of the full envelope has this property, so
// restricting the oracle to these nodes keeps it exact.
inline std::vector<int> oracle_candidates(const ScalarGrid& g) {
  const auto& s = g.spec;
  std::vector<char> keep(s.size(), 1);
  for (int axis = 0; axis < s.dim(); ++axis) {
    for (std::size_t idx = 0; idx < s.size(); ++idx) {
      auto m = s.unflatten(idx);
      if (m[axis] != 0) continue;
      std::vector<Vec> line;
      std::vector<double> vals;
      std::vector<std::size_t> ids;
      for (int t = 0; t < s.res[axis]; ++t) {
        m[axis] = t;
        std::size_t id = s.flatten(m);
        ids.push_back(id);
        line.push_back(make_vec({static_cast<double>(t)}));
        vals.push_back(g.values[id]);
      }
      LowerEnvelope env(1, line, vals, EnvelopeMethod::hull);
      double scale = 1.0;
      for (double v : vals) scale = std::max(scale, std::abs(v));
      for (std::size_t t = 0; t < ids.size(); ++t)
        if (env(line[t]) < vals[t] - 1e-12 * scale) keep[ids[t]] = 0;
    }
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) out.push_back(static_cast<int>(i));
  return out;
}

// Centered-difference gradients at nodes (one-sided on the boundary).
inline std::vector<Vec> grid_gradients(const ScalarGrid& g) {
  const auto& s = g.spec;
  std::vector<Vec> out(s.size(), Vec::Zero(s.dim()));
  for (std::size_t idx = 0; idx < s.size(); ++idx) {
    auto m = s.unflatten(idx);
    for (int i = 0; i < s.dim(); ++i) {
      auto a = m, b = m;
      if (a[i] < s.res[i] - 1) ++a[i];
      if (b[i] > 0) --b[i];
      out[idx](i) = (g.values[s.flatten(a)] - g.values[s.flatten(b)]) / ((a[i] - b[i]) * s.step(i));
    }
  }
  return out;
}

// Largest norm of the per-cell forward-difference gradient.
inline double grid_lipschitz(const ScalarGrid& g) {
  const auto& s = g.spec;
  double lip = 0.0;
  for (std::size_t idx = 0; idx < s.size(); ++idx) {
    auto m = s.unflatten(idx);
    bool ok = true;
    for (int i = 0; i < s.dim(); ++i) ok &= m[i] < s.res[i] - 1;
    if (!ok) continue;
    double sq = 0.0;
    for (int i = 0; i < s.dim(); ++i) {
      auto a = m;
      ++a[i];
      double d = (g.values[s.flatten(a)] - g.values[idx]) / s.step(i);
      sq += d * d;
    }
    lip = std::max(lip, std::sqrt(sq));
  }
  return lip;
}

// sup |grad(x) - grad(y)| / w(|x - y|) over node pairs at least 4 steps
// apart: all pairs on small grids, a fixed-seed sample otherwise.
inline double grid_gradient_modulus(const GridSpec& s, const std::vector<Vec>& grads, const Modulus& w,
                                    std::size_t sample_pairs = 400000, std::uint64_t seed = 42) {
  double minsep = 4.0 * s.max_step() * (1.0 - 1e-12);
  double M = 0.0;
  auto pair = [&](std::size_t a, std::size_t b) {
    double r = (s.node(a) - s.node(b)).norm();
    if (r < minsep) return;
    M = std::max(M, (grads[a] - grads[b]).norm() / w(r));
  };
  std::size_t n = s.size();
  if (n * (n - 1) / 2 <= sample_pairs) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) pair(a, b);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> u(0, n - 1);
    for (std::size_t t = 0; t < sample_pairs / 2; ++t) pair(u(rng), u(rng));
    // Short pairs: each node against its 4-step axis neighbours.
    for (std::size_t idx = 0; idx < n; ++idx) {
      auto m = s.unflatten(idx);
      for (int i = 0; i < s.dim(); ++i) {
        auto o = m;
        o[i] += static_cast<int>(std::ceil(4.0 * s.max_step() / s.step(i) - 1e-9));
        if (o[i] < s.res[i]) pair(idx, s.flatten(o));
      }
    }
  }
  return M;
}

struct KKReport {
  double M_H = 0.0;
  double M_conv = 0.0;
  double ratio = 0.0;  // M_conv / M_H (1 when both vanish)
  double lip_H = 0.0;
  double lip_conv = 0.0;
  bool modulus_ok = true;
  bool lipschitz_ok = true;
};

inline KKReport kk_bound_check(const ScalarGrid& H, const Modulus& w) {
  auto env = conv_envelope_grid(H);
  const int k = H.spec.dim();
  KKReport r;
  r.M_H = grid_gradient_modulus(H.spec, grid_gradients(H), w);
  r.M_conv = grid_gradient_modulus(H.spec, grid_gradients(env.envelope), w);
  double scale = 1e-12 * (1.0 + r.M_H);
  r.ratio = r.M_H > scale ? r.M_conv / r.M_H : (r.M_conv > scale ? kInf : 1.0);
  r.lip_H = grid_lipschitz(H);
  r.lip_conv = grid_lipschitz(env.envelope);
  r.modulus_ok = r.M_conv <= 1.1 * 4.0 * (k + 1) * r.M_H + scale;
  r.lipschitz_ok = r.lip_conv <= 1.05 * r.lip_H + 1e-12;
  return r;
}

// x -> <a, x> + env(U x) with centered-difference gradients of env, step
// `steps` per reduced axis, clipped to the reduced box.
inline ExtensionField envelope_field(Box box, std::string name, std::shared_ptr<const LowerEnvelope> env,
                                     Box reduced_box, Vec steps, Vec linear, Mat basis,
                                     std::optional<ScalarGrid> grid = std::nullopt) {
  const double tol = 1e-12 * (1.0 + reduced_box.diameter());
  auto eval = [env, reduced_box, steps, linear, basis, tol](const Vec& x) {
    const int k = static_cast<int>(basis.rows());
    Vec z(k);
    for (int r = 0; r < k; ++r) z(r) = basis.row(r).dot(x);
    for (int r = 0; r < k; ++r) z(r) = std::clamp(z(r), reduced_box.lo(r), reduced_box.hi(r));
    FieldSample s;
    s.value = linear.dot(x) + (k > 0 ? (*env)(z) : env->values().front());
    s.grad = linear;
    for (int r = 0; r < k; ++r) {
      Vec a = z, b = z;
      a(r) = std::min(z(r) + steps(r), reduced_box.hi(r));
      b(r) = std::max(z(r) - steps(r), reduced_box.lo(r));
      if (a(r) - b(r) <= tol) continue;
      double d = ((*env)(a) - (*env)(b)) / (a(r) - b(r));
      s.grad += d * basis.row(r).transpose();
    }
    return s;
  };
  return ExtensionField(std::move(box), std::move(name), eval, std::move(grid), steps.size() ? steps.maxCoeff() : 0.0);
}

}  // namespace convexjet
