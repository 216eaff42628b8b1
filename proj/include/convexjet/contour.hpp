#pragma once

#include "convexjet/jet.hpp"

#include <map>

namespace convexjet {

// Level set {F = level} of node values, piecewise linear. Cells are index
// pairs (segments) in 2D, triples (triangles) in 3D, and empty in 1D where
// the vertices are the crossing points themselves.
struct Contour {
  int dim = 0;
  double level = 0.0;
  std::vector<Vec> vertices;
  std::vector<std::array<int, 3>> cells;  // unused slots are -1
};

namespace detail {

// Vertices live on grid edges; an edge is keyed by its lower node and axis.
class ContourBuilder {
 public:
  ContourBuilder(const ScalarGrid& g, double level) : g_(g), level_(level) {
    out_.dim = g.spec.dim();
    out_.level = level;
  }

  double f(std::size_t i) const { return g_.values[i] - level_; }

  int vertex(std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    auto key = std::make_pair(a, b);
    auto it = index_.find(key);
    if (it != index_.end()) return it->second;
    double fa = f(a), fb = f(b);
    double t = fa == fb ? 0.5 : fa / (fa - fb);
    t = std::clamp(t, 0.0, 1.0);
    Vec xa = g_.spec.node(a), xb = g_.spec.node(b);
    out_.vertices.push_back(xa + t * (xb - xa));
    int id = static_cast<int>(out_.vertices.size()) - 1;
    index_.emplace(key, id);
    return id;
  }

  void add(int a, int b, int c = -1) {
    if (a == b || (c >= 0 && (a == c || b == c))) return;
    out_.cells.push_back({a, b, c});
  }

  Contour take() { return std::move(out_); }

 private:
  const ScalarGrid& g_;
  double level_;
  Contour out_;
  std::map<std::pair<std::size_t, std::size_t>, int> index_;
};

inline bool below(double v) { return v < 0.0; }

}  // namespace detail

inline Contour extract_contour(const ScalarGrid& g, double level) {
  const auto& s = g.spec;
  const int n = s.dim();
  if (g.values.size() != s.size()) throw InvalidInput("grid values do not match the grid");
  detail::ContourBuilder b(g, level);
  using detail::below;

  if (n == 1) {
    for (int i = 0; i + 1 < s.res[0]; ++i) {
      std::size_t a = i, c = i + 1;
      if (below(b.f(a)) != below(b.f(c))) b.vertex(a, c);
    }
    return b.take();
  }

  if (n == 2) {
    // Marching squares; saddles resolved by the cell-center average.
    for (int j = 0; j + 1 < s.res[1]; ++j)
      for (int i = 0; i + 1 < s.res[0]; ++i) {
        std::size_t c[4] = {s.flatten({i, j, 0}), s.flatten({i + 1, j, 0}), s.flatten({i + 1, j + 1, 0}),
                            s.flatten({i, j + 1, 0})};
        double v[4];
        int mask = 0;
        for (int k = 0; k < 4; ++k) {
          v[k] = b.f(c[k]);
          if (below(v[k])) mask |= 1 << k;
        }
        if (mask == 0 || mask == 15) continue;
        auto e = [&](int k) { return b.vertex(c[k], c[(k + 1) % 4]); };  // edge k joins corners k, k+1
        std::vector<int> cut;
        for (int k = 0; k < 4; ++k)
          if (below(v[k]) != below(v[(k + 1) % 4])) cut.push_back(k);
        if (cut.size() == 2) {
          b.add(e(cut[0]), e(cut[1]));
        } else {
          bool center_below = below(0.25 * (v[0] + v[1] + v[2] + v[3]));
          // Pair each edge with its neighbour around the below corners or
          // around the above corners, whichever the center joins.
          bool join_02 = center_below == below(v[0]);
          if (join_02) {
            b.add(e(0), e(1));
            b.add(e(2), e(3));
          } else {
            b.add(e(3), e(0));
            b.add(e(1), e(2));
          }
        }
      }
    return b.take();
  }

  // Marching tetrahedra: each cube split into six tetrahedra around the
  // main diagonal.
  static const int tets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};
  for (int kz = 0; kz + 1 < s.res[2]; ++kz)
    for (int jy = 0; jy + 1 < s.res[1]; ++jy)
      for (int ix = 0; ix + 1 < s.res[0]; ++ix) {
        std::size_t c[8];
        for (int q = 0; q < 8; ++q) c[q] = s.flatten({ix + (q & 1), jy + ((q >> 1) & 1), kz + ((q >> 2) & 1)});
        for (const auto& t : tets) {
          std::vector<int> in, out;
          for (int q : t) (below(b.f(c[q])) ? in : out).push_back(q);
          if (in.empty() || out.empty()) continue;
          if (in.size() == 1 || out.size() == 1) {
            int apex = in.size() == 1 ? in[0] : out[0];
            const auto& rest = in.size() == 1 ? out : in;
            b.add(b.vertex(c[apex], c[rest[0]]), b.vertex(c[apex], c[rest[1]]), b.vertex(c[apex], c[rest[2]]));
          } else {
            int p = b.vertex(c[in[0]], c[out[0]]), q = b.vertex(c[in[0]], c[out[1]]);
            int r = b.vertex(c[in[1]], c[out[1]]), u = b.vertex(c[in[1]], c[out[0]]);
            b.add(p, q, r);
            b.add(p, r, u);
          }
        }
      }
  return b.take();
}

// Distance from x to the contour (vertices in 1D, segments in 2D, vertices
// and triangle planes clipped to the triangle in 3D).
inline double contour_distance(const Contour& c, const Vec& x) {
  double best = kInf;
  if (c.cells.empty()) {
    for (const auto& v : c.vertices) best = std::min(best, (v - x).norm());
    return best;
  }
  for (const auto& cell : c.cells) {
    if (cell[2] < 0) {
      const Vec& a = c.vertices[cell[0]];
      const Vec& b = c.vertices[cell[1]];
      Vec d = b - a;
      double t = d.squaredNorm() > 0.0 ? std::clamp((x - a).dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
      best = std::min(best, (a + t * d - x).norm());
    } else {
      // Closest point on a triangle by projected barycentrics, falling back
      // to the edges when the projection leaves the triangle.
      const Vec& a = c.vertices[cell[0]];
      const Vec& b = c.vertices[cell[1]];
      const Vec& p = c.vertices[cell[2]];
      Vec e0 = b - a, e1 = p - a, r = x - a;
      double d00 = e0.dot(e0), d01 = e0.dot(e1), d11 = e1.dot(e1);
      double den = d00 * d11 - d01 * d01;
      if (den > 0.0) {
        double u = (d11 * r.dot(e0) - d01 * r.dot(e1)) / den;
        double w = (d00 * r.dot(e1) - d01 * r.dot(e0)) / den;
        if (u >= 0.0 && w >= 0.0 && u + w <= 1.0) {
          best = std::min(best, (a + u * e0 + w * e1 - x).norm());
          continue;
        }
      }
      for (auto [s, t] : {std::pair{&a, &b}, std::pair{&b, &p}, std::pair{&p, &a}}) {
        Vec d = *t - *s;
        double l = d.squaredNorm() > 0.0 ? std::clamp((x - *s).dot(d) / d.squaredNorm(), 0.0, 1.0) : 0.0;
        best = std::min(best, (*s + l * d - x).norm());
      }
    }
  }
  return best;
}

}  // namespace convexjet
