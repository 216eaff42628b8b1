#pragma once

#include "convexjet/c1.hpp"
#include "convexjet/c1omega.hpp"
#include "convexjet/contour.hpp"

namespace convexjet {

enum class BodyClass { c1, c11 };

inline std::string to_string(BodyClass c) { return c == BodyClass::c1 ? "c1" : "c11"; }

// Points K on a body boundary with unit outer normals N.
struct NormalData {
  int dim = 0;
  std::vector<Vec> K;
  std::vector<Vec> N;
  BodyClass cls = BodyClass::c1;
  std::optional<double> M;  // Lipschitz constant of N; measured when absent
  double eta = 0.25;
};

inline void require_valid(const NormalData& d) {
  if (d.dim < 1 || d.dim > kMaxDim) throw InvalidInput("body dimension must be between 1 and 3");
  if (d.K.empty()) throw InvalidInput("body data has no points");
  if (d.K.size() != d.N.size()) throw InvalidInput("points and normals have different lengths");
  for (std::size_t i = 0; i < d.K.size(); ++i) {
    if (d.K[i].size() != d.dim || d.N[i].size() != d.dim) throw InvalidInput("body entry " + std::to_string(i) + " has the wrong dimension");
    if (!d.K[i].allFinite() || !d.N[i].allFinite()) throw InvalidInput("body entry " + std::to_string(i) + " is not finite");
    if (std::abs(d.N[i].norm() - 1.0) > 1e-12) throw InvalidInput("normal " + std::to_string(i) + " is not a unit vector");
  }
  if (d.cls == BodyClass::c11) {
    if (!(d.eta > 0.0 && d.eta <= 0.5)) throw InvalidInput("eta must lie in (0, 1/2]");
    if (d.M && !(*d.M > 0.0)) throw InvalidInput("M must be positive");
  }
}

// max |N(x) - N(y)| / |x - y| over pairs; 0 for a single point.
inline double normal_lipschitz(const NormalData& d) {
  double m = 0.0;
  for (std::size_t i = 0; i < d.K.size(); ++i)
    for (std::size_t j = i + 1; j < d.K.size(); ++j) {
      double r = (d.K[i] - d.K[j]).norm();
      if (r > 0.0) m = std::max(m, (d.N[i] - d.N[j]).norm() / r);
    }
  return m;
}

// M used by the c11 rules. A constant normal field has no Lipschitz scale
// of its own; the jet's gradient jump towards the origin supplies one.
inline double body_M(const NormalData& d) {
  if (d.M) return *d.M;
  double m = normal_lipschitz(d);
  if (m > 0.0) return m;
  double rmin = kInf;
  for (const auto& y : d.K) rmin = std::min(rmin, y.norm());
  return rmin > 0.0 && std::isfinite(rmin) ? 1.0 / rmin : 1.0;
}

inline double body_scale(const NormalData& d) {
  double r = 0.0;
  for (const auto& y : d.K) r = std::max(r, y.norm());
  return 1.0 + r;
}

// One report per condition of the class: O, K, then KW1 or KW11.
inline std::vector<ConditionReport> body_condition_reports(const NormalData& d) {
  require_valid(d);
  const double tol = 1e-12 * body_scale(d);
  std::vector<ConditionReport> out;
  auto pair = [](std::size_t i, std::size_t j) { return std::make_pair(static_cast<int>(i), static_cast<int>(j)); };

  ConditionReport o;
  o.condition = "O";
  o.tolerance = 0.0;
  for (std::size_t i = 0; i < d.K.size(); ++i) {
    double s = d.N[i].dot(d.K[i]);
    if (s < o.margin) {
      o.margin = s;
      o.worst_pair = pair(i, i);
    }
  }
  o.holds = o.margin > 0.0;
  out.push_back(o);

  // <N(y), x - y> for x = K[i], y = K[j].
  auto tilt = [&](std::size_t i, std::size_t j) { return d.N[j].dot(d.K[i] - d.K[j]); };

  ConditionReport k;
  k.condition = "K";
  k.tolerance = tol;
  for (std::size_t i = 0; i < d.K.size(); ++i)
    for (std::size_t j = 0; j < d.K.size(); ++j) {
      if (i == j) continue;
      double s = -tilt(i, j);
      if (s < k.margin) {
        k.margin = s;
        k.worst_pair = pair(i, j);
      }
    }
  if (d.K.size() < 2) k.margin = 0.0;
  k.holds = k.margin >= -tol;
  out.push_back(k);

  ConditionReport w;
  if (d.cls == BodyClass::c1) {
    w.condition = "KW1";
    const double tol_eq = 1e-9 * body_scale(d), tol_grad = 1e-9;
    w.constant_used = tol_eq;
    for (std::size_t i = 0; i < d.K.size(); ++i)
      for (std::size_t j = 0; j < d.K.size(); ++j) {
        if (i == j) continue;
        double t = std::abs(tilt(i, j));
        double s = t <= tol_eq ? tol_grad - (d.N[i] - d.N[j]).norm() : t - tol_eq;
        if (s < w.margin) {
          w.margin = s;
          w.worst_pair = pair(i, j);
        }
      }
    if (d.K.size() < 2) w.margin = 0.0;
    w.holds = w.margin >= 0.0;
  } else {
    w.condition = "KW11";
    w.tolerance = tol;
    double M = body_M(d);
    w.constant_used = M;
    for (std::size_t i = 0; i < d.K.size(); ++i)
      for (std::size_t j = 0; j < d.K.size(); ++j) {
        if (i == j) continue;
        double s = -tilt(i, j) - d.eta / (2.0 * M) * (d.N[j] - d.N[i]).squaredNorm();
        if (s < w.margin) {
          w.margin = s;
          w.worst_pair = pair(i, j);
        }
      }
    if (d.K.size() < 2) w.margin = 0.0;
    w.holds = w.margin >= -tol;
  }
  out.push_back(w);
  return out;
}

// The first failing condition, or a summary that holds when all do.
inline ConditionReport check_body_conditions(const NormalData& d) {
  auto reps = body_condition_reports(d);
  for (const auto& r : reps)
    if (!r.holds) return r;
  ConditionReport s;
  s.condition = d.cls == BodyClass::c1 ? "O+K+KW1" : "O+K+KW11";
  for (const auto& r : reps) {
    std::ostringstream os;
    os << r.condition << " margin " << r.margin;
    s.flags.push_back(os.str());
  }
  s.margin = reps.front().margin;
  s.worst_pair = reps.front().worst_pair;
  return s;
}

struct BodyJet {
  Jet1 jet;  // carriers K then the origin
  double alpha = 0.0;
  double M = 0.0;  // c11 only
  double min_normal_dot = 0.0;
  double alpha_margin = 0.0;  // 1 - alpha
  std::vector<std::string> flags;
};

// f = 1, G = N on K; f(0) = alpha, G(0) = 0.
inline BodyJet build_body_jet(const NormalData& d) {
  auto rep = check_body_conditions(d);
  if (!rep.holds) throw Refusal(rep);
  BodyJet b;
  double m0 = kInf;
  for (std::size_t i = 0; i < d.K.size(); ++i) m0 = std::min(m0, d.N[i].dot(d.K[i]));
  b.min_normal_dot = m0;
  double lo = 0.0;
  if (d.cls == BodyClass::c11) {
    b.M = body_M(d);
    lo = d.eta / (2.0 * b.M);
    if (m0 <= lo)
      throw ConditionFailure("alpha rule infeasible: min <N(y), y> = " + std::to_string(m0) +
                             " does not exceed eta/(2M) = " + std::to_string(lo) + "; use a smaller eta");
  }
  // 1 - alpha = (m0 - lo) / 2, inside (0, m0 - lo).
  double gap = 0.5 * (m0 - lo);
  b.alpha = 1.0 - gap;
  b.alpha_margin = gap;
  if (d.cls == BodyClass::c11 && gap < 1e-3 * m0) b.flags.push_back("near-infeasible alpha margin");
  if (!(b.alpha > 0.0)) b.flags.push_back("alpha is not positive");

  Jet1& j = b.jet;
  j.dim = d.dim;
  j.points = d.K;
  j.values.assign(d.K.size(), 1.0);
  j.grads = d.N;
  j.points.push_back(Vec::Zero(d.dim));
  j.values.push_back(b.alpha);
  j.grads.push_back(Vec::Zero(d.dim));

  if (d.cls == BodyClass::c1) {
    auto c = check_C(j);
    if (!c.holds) throw CertificationFailure("body jet fails (C): " + describe(c));
    auto w = check_CW1(j);
    if (!w.holds) throw CertificationFailure("body jet fails (CW1): " + describe(w));
  } else {
    auto w = check_CW1omega(j, Modulus::linear(), d.eta);
    if (!w.holds)
      throw ConditionFailure("body jet fails (CW1omega) with linear modulus: " + describe(w) + "; use a smaller eta");
  }
  return b;
}

struct BodyOptions {
  std::optional<Box> box;
  int res = 0;
  std::size_t convexity_pairs = 20000;
  std::uint64_t seed = 42;
};

struct BodyReport {
  std::string cls;
  double alpha = 0.0;
  double F0 = 0.0;
  double alpha_error = 0.0;         // |F(0) - alpha|
  double max_level_error = 0.0;     // max over K of |F(y) - 1|
  double min_alignment = 1.0;       // min over K of <grad F / |grad F|, N>
  double max_K_to_contour = 0.0;    // max over K of the distance to the contour
  double midpoint_max_excess = 0.0; // max of F(midpoint) - 1 over vertex pairs
  double reverse_margin = 0.0;      // (K) margin of the reconstructed boundary
  std::size_t contour_vertices = 0;
  std::size_t contour_cells = 0;
  double h = 0.0;
  std::vector<std::string> flags;
};

struct BodyResult {
  ExtensionField F;
  ScalarGrid Fgrid;
  Contour contour;
  BodyJet bjet;
  BodyReport report;
};

inline Box default_body_box(const NormalData& d) {
  std::vector<Vec> pts = d.K;
  pts.push_back(Vec::Zero(d.dim));
  Box b = Box::bounding(pts);
  return b.expanded(0.5 * (1.0 + b.diameter()));
}

inline BodyResult interpolate_body(const NormalData& d, const BodyOptions& opt = {}) {
  BodyJet bj = build_body_jet(d);
  const int n = d.dim;
  Box box = opt.box ? *opt.box : default_body_box(d);
  int res = opt.res ? opt.res : default_resolution(n);

  std::optional<ExtensionField> F;
  if (d.cls == BodyClass::c1) {
    C1Options o;
    o.box = box;
    o.res = res;
    F.emplace(extend_c1(bj.jet, o).F);
  } else {
    OmegaOptions o;
    o.eta = d.eta;
    o.box = box;
    o.res = res;
    F.emplace(extend_c1omega(bj.jet, Modulus::linear(), o).F);
  }

  BodyResult r{std::move(*F), {}, {}, std::move(bj), {}};
  BodyReport& rep = r.report;
  rep.cls = to_string(d.cls);
  rep.alpha = r.bjet.alpha;
  rep.flags = r.bjet.flags;

  GridSpec spec = make_grid(box, res);
  rep.h = spec.max_step();
  r.Fgrid.spec = spec;
  r.Fgrid.values.resize(spec.size());
  parallel_for(spec.size(), [&](std::size_t i) { r.Fgrid.values[i] = r.F.value(spec.node(i)); });

  for (std::size_t i = 0; i < spec.size(); ++i) {
    auto m = spec.unflatten(i);
    bool boundary = false;
    for (int a = 0; a < n; ++a) boundary |= m[a] == 0 || m[a] == spec.res[a] - 1;
    if (boundary && r.Fgrid.values[i] <= 1.0) throw DomainError("contour does not enclose 0; enlarge the grid box");
  }
  rep.F0 = r.F.value(Vec::Zero(n));
  rep.alpha_error = std::abs(rep.F0 - rep.alpha);
  if (!(rep.F0 < 1.0)) throw DomainError("contour does not enclose 0");

  r.contour = extract_contour(r.Fgrid, 1.0);
  rep.contour_vertices = r.contour.vertices.size();
  rep.contour_cells = r.contour.cells.size();

  std::vector<double> dist(d.K.size());
  std::vector<FieldSample> at(d.K.size());
  parallel_for(d.K.size(), [&](std::size_t i) {
    at[i] = r.F(d.K[i]);
    dist[i] = contour_distance(r.contour, d.K[i]);
  });
  for (std::size_t i = 0; i < d.K.size(); ++i) {
    rep.max_level_error = std::max(rep.max_level_error, std::abs(at[i].value - 1.0));
    double gn = at[i].grad.norm();
    rep.min_alignment = std::min(rep.min_alignment, gn > 0.0 ? at[i].grad.dot(d.N[i]) / gn : -1.0);
    rep.max_K_to_contour = std::max(rep.max_K_to_contour, dist[i]);
  }

  // Convexity of the sublevel set: midpoints of contour vertices stay inside.
  const auto& V = r.contour.vertices;
  if (V.size() >= 2) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<std::size_t> pick(0, V.size() - 1);
    std::vector<Vec> mids(opt.convexity_pairs);
    for (auto& m : mids) m = 0.5 * (V[pick(rng)] + V[pick(rng)]);
    std::vector<double> ex(mids.size());
    parallel_for(mids.size(), [&](std::size_t i) { ex[i] = r.F.value(mids[i]) - 1.0; });
    rep.midpoint_max_excess = *std::max_element(ex.begin(), ex.end());
  }

  // Reverse check: normals sampled from grad F on the contour satisfy (K).
  if (!V.empty() && n >= 2) {
    NormalData back;
    back.dim = n;
    back.cls = BodyClass::c1;
    std::vector<Vec> g(V.size());
    parallel_for(V.size(), [&](std::size_t i) { g[i] = r.F.gradient(V[i]); });
    for (std::size_t i = 0; i < V.size(); ++i) {
      double gn = g[i].norm();
      if (!(gn > 0.0)) continue;
      back.K.push_back(V[i]);
      back.N.push_back(g[i] / gn);
    }
    if (back.K.size() >= 2) rep.reverse_margin = body_condition_reports(back)[1].margin;
  }
  return r;
}

}  // namespace convexjet
