#pragma once

#include "convexjet/conditions.hpp"
#include "convexjet/envelope.hpp"
#include "convexjet/minimal.hpp"
#include "convexjet/whitney.hpp"

#include <map>

namespace convexjet {

// 0 for t <= 0, t^2 up to (K + eps)/2, then affine with slope K + eps.
inline double theta(double K, double eps, double t) {
  double L = K + eps;
  if (t <= 0.0) return 0.0;
  if (t <= 0.5 * L) return t * t;
  return L * (t - 0.25 * L);
}

inline double theta_prime(double K, double eps, double t) {
  double L = K + eps;
  if (t <= 0.0) return 0.0;
  if (t <= 0.5 * L) return 2.0 * t;
  return L;
}

inline int default_resolution(int dim) { return dim == 1 ? 401 : dim == 2 ? 101 : 17; }

// Grid with res nodes per axis over box; res <= 0 picks the default.
inline GridSpec make_grid(const Box& box, int res) {
  if (res <= 0) res = default_resolution(box.dim());
  if (res < 9) throw InvalidInput("grid resolution must be at least 9 per axis");
  auto g = GridSpec::uniform(box, res);
  g.check();
  return g;
}

inline void require_carriers_inside(const Jet1& jet, const Box& box) {
  for (std::size_t i = 0; i < jet.size(); ++i)
    if (!box.contains(jet.points[i], 1e-12 * (1.0 + box.diameter())))
      throw InvalidInput("grid box does not contain carrier " + std::to_string(i));
}

// Smallest distance from a grid node that is not a carrier to the carriers.
inline double min_node_distance(const GridSpec& s, const ClosedSet& E) {
  double r = kInf;
  for (std::size_t i = 0; i < s.size(); ++i) {
    double d = E.distance(s.node(i));
    if (d > 0.0) r = std::min(r, d);
  }
  return r;
}

// Whitney decomposition whose truncation collar holds no grid node except
// the carriers themselves.
inline std::unique_ptr<CubeDecomposition> decomposition_for_grid(const Jet1& jet, const GridSpec& s,
                                                                 int cap = 20) {
  auto E = ClosedSet::points(jet.dim, jet.points);
  double r = min_node_distance(s, E);
  int gen = CubeDecomposition::generation_for_collar(s.box, 0.5 * r, 0.125, cap);
  return std::make_unique<CubeDecomposition>(std::move(E), s.box, gen);
}

// Everything H_eps needs, evaluable off the grid.
struct SmoothingContext {
  const Jet1* jet = nullptr;
  const CubeDecomposition* dec = nullptr;
  const PiecewiseAffineMax* m = nullptr;
  double K = 0.0;
  double eps = 1.0;

  double Phi(const Vec& x) const { return theta(K, eps, dec->E().distance(x)); }

  double H(const Vec& x) const {
    Vec y = x;
    const Box& b = dec->bbox();
    for (int i = 0; i < y.size(); ++i) y(i) = std::clamp(y(i), b.lo(i), b.hi(i));
    double d = dec->E().distance(y);
    if (d == 0.0) return 0.0;
    double ft = whitney_extend_jet_or_taylor(*jet, *dec, y).value;
    return std::abs(ft - (*m)(y)) + 2.0 * theta(K, eps, d);
  }
};

struct SmoothingData {
  ScalarGrid Phi;
  ScalarGrid H;
  std::vector<double> ftilde;  // Whitney extension at the nodes
  std::vector<Vec> ftilde_grad;
  std::vector<double> m;       // minimal extension at the nodes
};

inline SmoothingData smoothing_data(const SmoothingContext& ctx, const GridSpec& s) {
  require_carriers_inside(*ctx.jet, s.box);
  SmoothingData out;
  out.Phi.spec = out.H.spec = s;
  out.Phi.values.resize(s.size());
  out.H.values.resize(s.size());
  out.ftilde.resize(s.size());
  out.ftilde_grad.resize(s.size());
  out.m.resize(s.size());
  parallel_for(s.size(), [&](std::size_t i) {
    Vec x = s.node(i);
    std::vector<PartitionTerm> scratch;
    auto ft = whitney_extend_jet_or_taylor(*ctx.jet, *ctx.dec, x, &scratch);
    double d = ctx.dec->E().distance(x);
    out.ftilde[i] = ft.value;
    out.ftilde_grad[i] = ft.grad;
    out.m[i] = (*ctx.m)(x);
    out.Phi.values[i] = theta(ctx.K, ctx.eps, d);
    out.H.values[i] = d == 0.0 ? 0.0 : std::abs(ft.value - out.m[i]) + 2.0 * out.Phi.values[i];
  });
  return out;
}

struct MajorantResult {
  ScalarGrid phi;            // smoothed H at the nodes
  double worst_ratio = 0.0;  // max |phi - H| / Phi over non-carrier nodes
  Vec worst_node;
  int refinements = 0;
  double lip_H = 0.0;
  double lip_phi = 0.0;
  std::map<int, double> radii;  // averaging radius per cube generation
};

// phi = sum_j phi_j (H averaged at radius r_j), with r_j chosen per
// generation so that the averaging error stays below half of inf Phi on the
// dilated cube and below eps D_j / (2 A1 N). Radii are halved until every
// node satisfies |phi - H| <= Phi.
inline MajorantResult smooth_majorant(const SmoothingContext& ctx, const SmoothingData& data,
                                      double lip_H_bound, int max_refinements = 8) {
  const auto& s = data.H.spec;
  const auto& dec = *ctx.dec;
  const int k = s.dim();
  MajorantResult out;
  out.phi.spec = s;
  out.phi.values.assign(s.size(), 0.0);
  out.lip_H = grid_lipschitz(data.H);
  const auto& cst = dec.constants();
  double scale = 1.0;
  for (int g = 0; g <= dec.max_generation(); ++g) {
    double D = dec.side_at(g) * std::sqrt(double(k));
    double infPhi = theta(ctx.K, ctx.eps, D * (1.0 - 0.5 * dec.eps0()));
    double tol = std::min(0.5 * infPhi, ctx.eps * D / (2.0 * cst.A1 * std::max(cst.N, 1)));
    out.radii[g] = tol / (std::max(lip_H_bound, 1e-300) * std::sqrt(double(k)));
  }
  // Tensor weights (1/4, 1/2, 1/4) on offsets {-1, 0, 1}.
  std::vector<std::pair<Vec, double>> quad;
  int npts = 1;
  for (int i = 0; i < k; ++i) npts *= 3;
  for (int q = 0; q < npts; ++q) {
    Vec o(k);
    double w = 1.0;
    int t = q;
    for (int i = 0; i < k; ++i) {
      int d = t % 3 - 1;
      t /= 3;
      o(i) = d;
      w *= d == 0 ? 0.5 : 0.25;
    }
    quad.push_back({o, w});
  }
  for (int attempt = 0; attempt <= max_refinements; ++attempt) {
    parallel_for(s.size(), [&](std::size_t i) {
      Vec x = s.node(i);
      if (!dec.in_domain(x)) {
        out.phi.values[i] = data.H.values[i];  // collar and carriers
        return;
      }
      std::vector<PartitionTerm> terms;
      dec.partition_eval(x, terms);
      std::map<int, double> avg;
      double v = 0.0;
      for (const auto& t : terms) {
        int g = dec.cubes()[t.cube].generation;
        auto it = avg.find(g);
        if (it == avg.end()) {
          double r = out.radii.at(g) * scale;
          double a = 0.0;
          for (const auto& [o, w] : quad) a += w * ctx.H(x + r * o);
          it = avg.emplace(g, a).first;
        }
        v += t.weight * it->second;
      }
      out.phi.values[i] = v;
    });
    out.worst_ratio = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      double P = data.Phi.values[i];
      double err = std::abs(out.phi.values[i] - data.H.values[i]);
      if (P == 0.0) continue;
      double r = err / P;
      if (r > out.worst_ratio) {
        out.worst_ratio = r;
        out.worst_node = s.node(i);
      }
    }
    if (out.worst_ratio <= 1.0) {
      for (auto& [g, r] : out.radii) r *= scale;
      out.lip_phi = grid_lipschitz(out.phi);
      return out;
    }
    scale *= 0.5;
    out.refinements = attempt + 1;
  }
  throw CertificationFailure("smoothed majorant misses |phi - H| <= Phi after refinement", out.worst_node);
}

struct C1Options {
  std::optional<double> eps;
  std::optional<Box> box;
  int res = 0;
  bool smoothing = true;  // false: g = f~ alone (negative control)
  int max_generation_cap = 20;
};

struct C1Report {
  double K = 0.0;
  double eps = 0.0;
  double whitney_lip_ratio = 0.0;  // max |grad f~| / K over nodes
  int max_generation = 0;
  std::size_t cubes = 0;
  double carrier_value_error = 0.0;
  double carrier_gradient_error = 0.0;
  double lip_F = 0.0;
  double lip_bound = 0.0;  // 6 * whitney_lip_ratio * K
  bool lip_ok = true;
  double g_minus_m_min = 0.0;
  double sandwich_min_slack = 0.0;  // min over nodes of min(F - m, g - F)
  double majorant_ratio = 0.0;
  int majorant_refinements = 0;
  double lip_H = 0.0;
  double lip_phi = 0.0;
  bool lip_phi_ok = true;
  bool coercive_boundary = true;
  double slope_jump_max = 0.0;
  std::string envelope_method;
  std::size_t nodes = 0;
};

struct C1Result {
  ExtensionField F;
  C1Report report;
  ScalarGrid g;  // majorant at the nodes
  ScalarGrid m;  // minimal extension at the nodes
  std::shared_ptr<const LowerEnvelope> envelope;
};

// Largest difference between right and left slopes of F along each axis at
// the carriers, step h.
inline double carrier_slope_jump(const ExtensionField& F, const Jet1& jet, const Vec& steps) {
  double worst = 0.0;
  const Box& b = F.box();
  for (std::size_t c = 0; c < jet.size(); ++c) {
    const Vec& y = jet.points[c];
    double fy = F.value(y);
    for (int i = 0; i < jet.dim; ++i) {
      Vec a = y, z = y;
      a(i) += steps(i);
      z(i) -= steps(i);
      if (a(i) > b.hi(i) || z(i) < b.lo(i)) continue;
      double right = (F.value(a) - fy) / steps(i), left = (fy - F.value(z)) / steps(i);
      worst = std::max(worst, right - left);
    }
  }
  return worst;
}

inline C1Result extend_c1(const Jet1& jet, const C1Options& opt = {}) {
  require_valid(jet);
  auto rc = check_C(jet);
  if (!rc.holds) throw Refusal(rc);
  auto rw = check_CW1(jet);
  if (!rw.holds) throw Refusal(rw);

  const int n = jet.dim;
  C1Report rep;
  rep.K = jet.max_grad_norm();
  Box hull = Box::bounding(jet.points);
  Box box = opt.box ? *opt.box : hull;
  auto m = build_m(jet);

  // Default eps needs the Whitney Lipschitz ratio, which needs the grid; a
  // provisional eps = 1 fixes the default box and is refined below.
  double eps = opt.eps.value_or(1.0);
  if (opt.eps && !(eps > 0.0)) throw InvalidInput("eps must be positive");
  if (!opt.box) box = hull.expanded(2.0 * (rep.K + eps));
  for (int i = 0; i < n; ++i)
    if (!(box.extent()(i) > 0.0)) box = box.expanded(1.0);
  GridSpec spec = make_grid(box, opt.res);
  require_carriers_inside(jet, spec.box);
  auto dec = decomposition_for_grid(jet, spec, opt.max_generation_cap);
  rep.max_generation = dec->max_generation();
  rep.cubes = dec->cubes().size();

  SmoothingContext ctx{&jet, dec.get(), &m, rep.K, eps};
  auto data = smoothing_data(ctx, spec);
  double lip_ft = 0.0;
  for (const auto& g : data.ftilde_grad) lip_ft = std::max(lip_ft, g.norm());
  rep.whitney_lip_ratio = rep.K > 0.0 ? std::max(1.0, lip_ft / rep.K) : 1.0;
  if (!opt.eps) {
    eps = rep.K > 0.0 ? std::min(1.0, rep.whitney_lip_ratio * rep.K / 3.0) : 1.0;
    ctx.eps = eps;
    data = smoothing_data(ctx, spec);
  }
  rep.eps = eps;

  ScalarGrid g;
  g.spec = spec;
  g.values.resize(spec.size());
  if (opt.smoothing) {
    double lip_H_bound = 1.5 * lip_ft + rep.K + 2.0 * (rep.K + eps);
    auto maj = smooth_majorant(ctx, data, lip_H_bound);
    rep.majorant_ratio = maj.worst_ratio;
    rep.majorant_refinements = maj.refinements;
    rep.lip_H = maj.lip_H;
    rep.lip_phi = maj.lip_phi;
    rep.lip_phi_ok = maj.lip_phi <= maj.lip_H + eps + 1e-12;
    for (std::size_t i = 0; i < spec.size(); ++i) g.values[i] = data.ftilde[i] + maj.phi.values[i];
  } else {
    g.values = data.ftilde;
  }
  ScalarGrid mg;
  mg.spec = spec;
  mg.values = data.m;

  rep.g_minus_m_min = kInf;
  for (std::size_t i = 0; i < spec.size(); ++i) rep.g_minus_m_min = std::min(rep.g_minus_m_min, g.values[i] - data.m[i]);

  // Envelope over the nodes and the carriers (g = f there).
  std::vector<Vec> sites = grid_nodes(spec);
  std::vector<double> vals = g.values;
  for (std::size_t c = 0; c < jet.size(); ++c) {
    sites.push_back(jet.points[c]);
    vals.push_back(jet.values[c]);
  }
  auto env = std::make_shared<const LowerEnvelope>(n, std::move(sites), std::move(vals));
  rep.envelope_method = to_string(env->method());

  ScalarGrid Fg;
  Fg.spec = spec;
  Fg.values.resize(spec.size());
  parallel_for(spec.size(), [&](std::size_t i) { Fg.values[i] = std::min((*env)(env->sites()[i]), g.values[i]); });

  Vec steps(n);
  for (int i = 0; i < n; ++i) steps(i) = spec.step(i);
  auto F = envelope_field(spec.box, "convex C1 extension", env, spec.box, steps, Vec::Zero(n), Mat::Identity(n, n), Fg);

  rep.nodes = spec.size();
  for (std::size_t c = 0; c < jet.size(); ++c) {
    auto s = F(jet.points[c]);
    rep.carrier_value_error = std::max(rep.carrier_value_error, std::abs(s.value - jet.values[c]));
    rep.carrier_gradient_error = std::max(rep.carrier_gradient_error, (s.grad - jet.grads[c]).norm());
  }
  rep.lip_F = grid_lipschitz(Fg);
  rep.lip_bound = 6.0 * rep.whitney_lip_ratio * rep.K;
  rep.lip_ok = rep.lip_F <= rep.lip_bound + 1e-9 * jet.scale();
  rep.sandwich_min_slack = kInf;
  for (std::size_t i = 0; i < spec.size(); ++i)
    rep.sandwich_min_slack = std::min({rep.sandwich_min_slack, Fg.values[i] - data.m[i], g.values[i] - Fg.values[i]});
  double bmin = kInf;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    auto mi = spec.unflatten(i);
    bool boundary = false;
    for (int a = 0; a < n; ++a) boundary |= mi[a] == 0 || mi[a] == spec.res[a] - 1;
    if (boundary) bmin = std::min(bmin, g.values[i]);
  }
  double fmax = *std::max_element(jet.values.begin(), jet.values.end());
  rep.coercive_boundary = bmin > fmax;
  rep.slope_jump_max = carrier_slope_jump(F, jet, steps);

  return C1Result{std::move(F), rep, std::move(g), std::move(mg), env};
}

}  // namespace convexjet
