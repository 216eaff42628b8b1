#pragma once

#include "convexjet/c1.hpp"

namespace convexjet {

// sup |grad F(x) - grad F(y)| / w(|x - y|) over random pairs in the field box
// at separation >= min_sep.
inline double measure_gradient_modulus(const ExtensionField& F, const Modulus& w, std::size_t pair_count,
                                       double min_sep, std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  const Box& b = F.box();
  if (b.diameter() <= min_sep) return 0.0;
  std::vector<std::uniform_real_distribution<double>> axis;
  for (int i = 0; i < b.dim(); ++i) axis.emplace_back(b.lo(i), b.hi(i));
  auto draw = [&] {
    Vec x(b.dim());
    for (int i = 0; i < b.dim(); ++i) x(i) = axis[i](rng);
    return x;
  };
  std::vector<std::pair<Vec, Vec>> pairs;
  pairs.reserve(pair_count);
  for (std::size_t guard = 0; pairs.size() < pair_count && guard < 100 * pair_count; ++guard) {
    Vec x = draw(), y = draw();
    if ((x - y).norm() >= min_sep) pairs.emplace_back(x, y);
  }
  std::vector<double> ratio(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto& [x, y] = pairs[i];
    ratio[i] = (F.gradient(x) - F.gradient(y)).norm() / w((x - y).norm());
  });
  double M = 0.0;
  for (double r : ratio) M = std::max(M, r);
  return M;
}

struct ClosureReport {
  double carrier_pairs_min_slack = kInf;  // 2M family on carrier pairs
  double grid_pairs_min_slack = kInf;     // 4M family on (node, carrier) pairs
  double min_slack() const { return std::min(carrier_pairs_min_slack, grid_pairs_min_slack); }
};

// Both sides of 0 <= c(x) - c(y) - <grad c(y), x - y> <= a M |x - y| w(|x - y|)
// with a = 2 on carrier pairs and a = 4 for sampled grid nodes x.
inline ClosureReport check_closure_inequalities(const Jet1& cjet, const PiecewiseAffineMax& c, const GridSpec& grid,
                                                const Modulus& w, double M, std::size_t pair_count = 1000,
                                                std::uint64_t seed = 42) {
  ClosureReport rep;
  auto slack = [&](double cx, std::size_t y, const Vec& x, double a) {
    double r = (x - cjet.points[y]).norm();
    double gap = cx - cjet.values[y] - cjet.grads[y].dot(x - cjet.points[y]);
    return std::min(gap, a * M * r * w(r) - gap);
  };
  for (std::size_t i = 0; i < cjet.size(); ++i)
    for (std::size_t j = 0; j < cjet.size(); ++j)
      if (i != j) rep.carrier_pairs_min_slack = std::min(rep.carrier_pairs_min_slack, slack(cjet.values[i], j, cjet.points[i], 2.0));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> un(0, grid.size() - 1), uc(0, cjet.size() - 1);
  for (std::size_t t = 0; t < pair_count; ++t) {
    Vec x = grid.node(un(rng));
    rep.grid_pairs_min_slack = std::min(rep.grid_pairs_min_slack, slack(c(x), uc(rng), x, 4.0));
  }
  return rep;
}

// Jet of c on P(C): values f - <g, x>, gradients U (G - g). Carriers with
// the same projection are merged after checking they agree.
inline Jet1 reduced_jet(const Jet1& jet, const Factorization& fac) {
  Jet1 r;
  r.dim = fac.k;
  double tol = 1e-9 * jet.scale();
  for (std::size_t i = 0; i < jet.size(); ++i) {
    Vec z = fac.project(jet.points[i]);
    double v = jet.values[i] - fac.linear_part.dot(jet.points[i]);
    Vec g = fac.basis * (jet.grads[i] - fac.linear_part);
    bool dup = false;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if ((r.points[j] - z).norm() <= 1e-12 * (1.0 + z.norm())) {
        if (std::abs(r.values[j] - v) > tol || (r.grads[j] - g).norm() > tol)
          throw CertificationFailure("carriers with equal projection carry different reduced data", jet.points[i]);
        dup = true;
        break;
      }
    }
    if (dup) continue;
    r.points.push_back(z);
    r.values.push_back(v);
    r.grads.push_back(g);
  }
  return r;
}

struct OmegaOptions {
  std::optional<double> eta;
  std::optional<Box> box;
  int res = 0;
  int max_generation_cap = 20;
  std::uint64_t seed = 42;
  std::size_t modulus_pairs = 20000;
  double budget_safety = 1.25;
};

struct OmegaReport {
  double eta = 0.0;
  double M = 0.0;
  int k = 0;
  bool affine = false;
  double carrier_value_error = 0.0;
  double carrier_gradient_error = 0.0;
  double measured_M_F = 0.0;
  double ratio = 0.0;  // measured_M_F / M
  double gamma = 0.0;  // measured M(grad c~) / M
  double lambda = 0.0;
  double lambda_ceiling = 0.0;  // 1.25 (4 + gamma) (6 + eps0)^2 M
  double budget_min_slack = kInf;  // (4 + gamma) M w(d) d - |c - c~| over samples
  std::size_t cubes = 0;
  int max_generation = 0;
  double psi_minus_c_min = kInf;
  double sandwich_min_slack = kInf;  // min(F~ - c, psi - F~) on reduced nodes
  bool reduced_condition_holds = true;
  double reduced_condition_margin = kInf;
  double closure_min_slack = kInf;
  std::string envelope_method;
  std::size_t nodes = 0;
  std::vector<std::string> flags;
};

struct OmegaResult {
  ExtensionField F;
  OmegaReport report;
  Factorization fac;
  Jet1 cjet;
  ScalarGrid c;       // reduced minimal extension on the reduced grid
  ScalarGrid psi;     // c~ + phi on the reduced grid
  ScalarGrid Ftilde;  // envelope of psi on the reduced grid
  std::vector<double> budgets;
  std::shared_ptr<const LowerEnvelope> envelope;
};

inline Box default_omega_box(const Jet1& jet) {
  Box hull = Box::bounding(jet.points);
  return hull.expanded(0.25 * (1.0 + hull.diameter()));
}

// Image of a box under z = U x, as a box.
inline Box project_box(const Box& b, const Mat& U) {
  const int n = b.dim();
  std::vector<Vec> corners;
  for (int c = 0; c < (1 << n); ++c) {
    Vec x(n);
    for (int i = 0; i < n; ++i) x(i) = (c >> i) & 1 ? b.hi(i) : b.lo(i);
    corners.push_back(U * x);
  }
  return Box::bounding(corners);
}

inline void fill_carrier_errors(const ExtensionField& F, const Jet1& jet, OmegaReport& rep) {
  for (std::size_t c = 0; c < jet.size(); ++c) {
    auto s = F(jet.points[c]);
    rep.carrier_value_error = std::max(rep.carrier_value_error, std::abs(s.value - jet.values[c]));
    rep.carrier_gradient_error = std::max(rep.carrier_gradient_error, (s.grad - jet.grads[c]).norm());
  }
}

inline OmegaResult extend_c1omega(const Jet1& jet, const Modulus& w, const OmegaOptions& opt = {}) {
  require_valid(jet);
  const int n = jet.dim;
  OmegaReport rep;
  rep.M = holder_seminorm(jet, w).value;

  // Gate.
  if (rep.M == 0.0) {
    auto rc = check_C(jet);
    if (!rc.holds) throw Refusal(rc);
    rep.eta = opt.eta.value_or(0.5);
  } else {
    if (opt.eta) {
      rep.eta = *opt.eta;
    } else {
      auto be = best_eta(jet, w);
      rep.eta = be.feasible ? std::min(0.5, be.eta) : 0.5;
    }
    auto rw = check_CW1omega(jet, w, rep.eta);
    rep.flags = rw.flags;
    if (!rw.holds) throw Refusal(rw);
  }

  Box box = opt.box ? *opt.box : default_omega_box(jet);
  for (int i = 0; i < n; ++i)
    if (!(box.extent()(i) > 0.0)) box = box.expanded(1.0);
  GridSpec spec = make_grid(box, opt.res);
  require_carriers_inside(jet, spec.box);

  auto m = build_m(jet);
  auto fac = factorize(m);
  rep.k = fac.k;
  const int k = fac.k;

  if (k == 0) {
    // m is affine and so is every convex extension through the carriers.
    rep.affine = true;
    Vec a = fac.linear_part;
    double b = fac.reduced.pieces().front().intercept;
    ScalarGrid Fg;
    Fg.spec = spec;
    for (std::size_t i = 0; i < spec.size(); ++i) Fg.values.push_back(a.dot(spec.node(i)) + b);
    ExtensionField F(spec.box, "affine extension", [a, b](const Vec& x) { return FieldSample{a.dot(x) + b, a}; }, Fg);
    fill_carrier_errors(F, jet, rep);
    rep.nodes = spec.size();
    rep.sandwich_min_slack = rep.psi_minus_c_min = 0.0;
    return OmegaResult{std::move(F), rep, fac, Jet1{}, {}, {}, {}, {}, nullptr};
  }

  Jet1 cj = reduced_jet(jet, fac);
  {
    auto rr = check_CW1omega(cj, w, rep.eta);
    rep.reduced_condition_holds = rr.holds;
    rep.reduced_condition_margin = rr.margin;
  }

  Box rbox = (k == n && fac.basis.isIdentity()) ? spec.box : project_box(spec.box, fac.basis);
  GridSpec rspec = make_grid(rbox, opt.res > 0 ? opt.res : default_resolution(k));
  require_carriers_inside(cj, rspec.box);
  auto dec = decomposition_for_grid(cj, rspec, opt.max_generation_cap);
  rep.cubes = dec->cubes().size();
  rep.max_generation = dec->max_generation();
  const double eps0 = dec->eps0();

  // c~ and c on the reduced nodes.
  ScalarGrid cg, ct;
  cg.spec = ct.spec = rspec;
  cg.values.resize(rspec.size());
  ct.values.resize(rspec.size());
  ct.grads.resize(rspec.size());
  parallel_for(rspec.size(), [&](std::size_t i) {
    Vec z = rspec.node(i);
    std::vector<PartitionTerm> scratch;
    auto s = whitney_extend_jet_or_taylor(cj, *dec, z, &scratch);
    ct.values[i] = s.value;
    ct.grads[i] = s.grad;
    cg.values[i] = fac.reduced(z);
  });

  // gamma from the gradient modulus of c~ on node pairs and carrier-node pairs.
  double Mc = grid_gradient_modulus(rspec, ct.grads, w, 400000, opt.seed);
  for (std::size_t c = 0; c < cj.size(); ++c)
    for (std::size_t i = 0; i < rspec.size(); ++i) {
      double r = (rspec.node(i) - cj.points[c]).norm();
      if (r > 0.0) Mc = std::max(Mc, (ct.grads[i] - cj.grads[c]).norm() / w(r));
    }
  rep.gamma = Mc / rep.M;

  // Budgets from samples of |c - c~| over each dilated cube.
  const auto& cubes = dec->cubes();
  std::vector<double> budgets(cubes.size(), 0.0);
  std::vector<double> cert(cubes.size(), kInf);
  const int per = 5;
  int samples = 1;
  for (int i = 0; i < k; ++i) samples *= per;
  const Box& dbox = dec->bbox();
  parallel_for(cubes.size(), [&](std::size_t j) {
    Box q = cubes[j].dilate(eps0);
    std::vector<PartitionTerm> scratch;
    double sup = 0.0, slack = kInf;
    auto sample = [&](const Vec& z, double ctilde) {
      double d = dec->E().distance(z);
      if (d == 0.0) return;
      double e = std::abs(fac.reduced(z) - ctilde);
      sup = std::max(sup, e);
      slack = std::min(slack, (4.0 + rep.gamma) * rep.M * w(d) * d - e);
    };
    for (int s = 0; s < samples; ++s) {
      Vec z(k);
      int t = s;
      for (int i = 0; i < k; ++i) {
        double u = double(t % per) / (per - 1);
        t /= per;
        z(i) = std::clamp(q.lo(i) + u * (q.hi(i) - q.lo(i)), dbox.lo(i), dbox.hi(i));
      }
      sample(z, whitney_extend_jet_or_taylor(cj, *dec, z, &scratch).value);
    }
    // Every grid node in the dilated cube, so that psi >= c holds at the
    // envelope sites.
    std::array<int, kMaxDim> lo{0, 0, 0}, hi{0, 0, 0};
    bool empty = false;
    for (int i = 0; i < k; ++i) {
      lo[i] = std::max(0, static_cast<int>(std::ceil((q.lo(i) - rspec.box.lo(i)) / rspec.step(i) - 1e-9)));
      hi[i] = std::min(rspec.res[i] - 1, static_cast<int>(std::floor((q.hi(i) - rspec.box.lo(i)) / rspec.step(i) + 1e-9)));
      empty |= hi[i] < lo[i];
    }
    for (auto idx = lo; !empty;) {
      std::size_t f = rspec.flatten(idx);
      if (q.contains(rspec.node(f), 0.0)) sample(rspec.node(f), ct.values[f]);
      int a = 0;
      for (; a < k; ++a) {
        if (++idx[a] <= hi[a]) break;
        idx[a] = lo[a];
      }
      if (a == k) break;
    }
    budgets[j] = opt.budget_safety * sup;
    cert[j] = slack;
  });
  for (std::size_t j = 0; j < cubes.size(); ++j) {
    if (cert[j] < -1e-12 * cj.scale())
      throw CertificationFailure("cube budget exceeds (4 + gamma) M w(d) d", cubes[j].center);
    rep.budget_min_slack = std::min(rep.budget_min_slack, cert[j]);
  }
  Corrector phi(*dec, budgets, w);
  rep.lambda = phi.lambda();
  rep.lambda_ceiling = opt.budget_safety * (4.0 + rep.gamma) * (6.0 + eps0) * (6.0 + eps0) * rep.M;
  if (rep.lambda > rep.lambda_ceiling * (1.0 + 1e-12)) {
    std::size_t worst = 0;
    for (std::size_t j = 0; j < cubes.size(); ++j)
      if (budgets[j] / (w(cubes[j].diameter()) * cubes[j].diameter()) >
          budgets[worst] / (w(cubes[worst].diameter()) * cubes[worst].diameter()))
        worst = j;
    throw CertificationFailure("corrector constant exceeds its ceiling", cubes[worst].center);
  }

  // psi = c~ + phi, required to dominate c.
  ScalarGrid psi;
  psi.spec = rspec;
  psi.values.resize(rspec.size());
  parallel_for(rspec.size(), [&](std::size_t i) {
    std::vector<PartitionTerm> scratch;
    psi.values[i] = ct.values[i] + phi.eval_or_zero(rspec.node(i), &scratch).value;
  });
  double tol = 1e-9 * cj.scale();
  std::size_t worst_node = 0;
  for (std::size_t i = 0; i < rspec.size(); ++i) {
    double s = psi.values[i] - cg.values[i];
    if (s < rep.psi_minus_c_min) {
      rep.psi_minus_c_min = s;
      worst_node = i;
    }
  }
  if (rep.psi_minus_c_min < -tol) throw CertificationFailure("psi falls below c", rspec.node(worst_node));

  std::vector<Vec> sites = grid_nodes(rspec);
  std::vector<double> vals = psi.values;
  for (std::size_t c = 0; c < cj.size(); ++c) {
    sites.push_back(cj.points[c]);
    vals.push_back(cj.values[c]);
  }
  auto env = std::make_shared<const LowerEnvelope>(k, std::move(sites), std::move(vals));
  rep.envelope_method = to_string(env->method());

  ScalarGrid Ft;
  Ft.spec = rspec;
  Ft.values.resize(rspec.size());
  parallel_for(rspec.size(), [&](std::size_t i) { Ft.values[i] = std::min((*env)(env->sites()[i]), psi.values[i]); });
  for (std::size_t i = 0; i < rspec.size(); ++i)
    rep.sandwich_min_slack = std::min({rep.sandwich_min_slack, Ft.values[i] - cg.values[i], psi.values[i] - Ft.values[i]});

  // Values of F on the n-dimensional grid.
  ScalarGrid Fg;
  Fg.spec = spec;
  Fg.values.resize(spec.size());
  parallel_for(spec.size(), [&](std::size_t i) {
    Vec x = spec.node(i);
    Vec z = fac.project(x);
    for (int r = 0; r < k; ++r) z(r) = std::clamp(z(r), rbox.lo(r), rbox.hi(r));
    Fg.values[i] = fac.linear_part.dot(x) + (*env)(z);
  });

  Vec steps(k);
  for (int r = 0; r < k; ++r) steps(r) = rspec.step(r);
  auto F = envelope_field(spec.box, "convex C1,w extension", env, rbox, steps, fac.linear_part, fac.basis, Fg);

  rep.nodes = spec.size();
  fill_carrier_errors(F, jet, rep);
  rep.closure_min_slack =
      check_closure_inequalities(cj, fac.reduced, rspec, w, rep.M, 1000, opt.seed).min_slack();
  rep.measured_M_F = measure_gradient_modulus(F, w, opt.modulus_pairs, 4.0 * spec.max_step(), opt.seed);
  rep.ratio = rep.measured_M_F / rep.M;

  return OmegaResult{std::move(F), rep, std::move(fac), std::move(cj), std::move(cg), std::move(psi),
                     std::move(Ft), std::move(budgets), env};
}

}  // namespace convexjet
