#pragma once

#include "convexjet/examples.hpp"
#include "convexjet/io.hpp"

#include "CLI11.hpp"

namespace convexjet::cli {

using io::json;
namespace fs = std::filesystem;

enum Exit : int { kOk = 0, kRefused = 3, kInvalid = 4, kInternal = 5 };

struct RunConfig {
  std::string command;
  std::string jet;
  std::string normals;
  std::string grid;
  std::string omega = "linear";
  std::optional<double> eta;
  std::string cls = "c1";
  std::string box;
  int res = 0;
  std::optional<double> eps;
  std::uint64_t seed = 42;
  std::string out;
  std::string method = "auto";
  int max_generation = 8;
};

struct Outcome {
  int code = kOk;
  json report;
};

namespace detail {

inline json header(const RunConfig& c) {
  json j;
  j["schema_version"] = io::kSchemaVersion;
  j["command"] = c.command;
  j["seed"] = c.seed;
  return j;
}

inline void require_res(int res) {
  if (res != 0 && res < 9) throw InvalidInput("resolution must be at least 9");
}

inline std::optional<Box> box_option(const RunConfig& c, int dim) {
  if (c.box.empty()) return std::nullopt;
  return io::parse_box(c.box, dim);
}

inline fs::path out_dir(const RunConfig& c) {
  fs::path p(c.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw InvalidInput("cannot create output directory " + c.out);
  return p;
}

inline Outcome refused(json rep, const ConditionReport& r) {
  rep["verdict"] = "refused";
  rep["refusal"] = io::to_json(r);
  rep["message"] = describe(r);
  return {kRefused, std::move(rep)};
}

inline Jet1 need_jet(const RunConfig& c) {
  if (c.jet.empty()) throw InvalidInput("--jet is required");
  return io::load_jet(c.jet);
}

inline bool is_omega_class(const std::string& cls) {
  if (cls == "c1") return false;
  if (cls == "c1omega" || cls == "c11") return true;
  throw InvalidInput("--class must be c1, c1omega or c11");
}

inline Modulus modulus_for(const RunConfig& c) {
  return c.cls == "c11" ? Modulus::linear() : io::parse_modulus(c.omega);
}

// Node values and gradients of a field on its grid.
inline ScalarGrid sample_field(const ExtensionField& F, const GridSpec& s) {
  ScalarGrid g;
  g.spec = s;
  g.values.resize(s.size());
  g.grads.resize(s.size());
  parallel_for(s.size(), [&](std::size_t i) {
    auto v = F(s.node(i));
    g.values[i] = v.value;
    g.grads[i] = v.grad;
  });
  return g;
}

inline Outcome cmd_check(const RunConfig& c) {
  Jet1 jet = need_jet(c);
  json rep = header(c);
  rep["class"] = c.cls;
  rep["jet"] = {{"dim", jet.dim}, {"size", jet.size()}};
  std::vector<ConditionReport> reps;
  reps.push_back(check_C(jet));
  if (!is_omega_class(c.cls)) {
    reps.push_back(check_CW1(jet));
  } else {
    Modulus w = modulus_for(c);
    rep["omega"] = w.describe();
    auto M = holder_seminorm(jet, w);
    auto Mt = whitney_seminorm(jet, w);
    auto ms = m_star(jet, w);
    json cons = {{"M", io::num(M.value)}, {"M_tilde", io::num(Mt.value)}, {"M_star", io::num(ms.value)},
                 {"affine", ms.affine}};
    double eta = 0.5;
    if (M.value > 0.0) {
      auto be = best_eta(jet, w);
      cons["best_eta"] = be.feasible ? io::num(be.eta) : json("not-feasible");
      if (be.feasible) eta = std::min(be.eta, 0.5);
    }
    if (c.eta) eta = *c.eta;
    rep["constants"] = cons;
    rep["eta"] = eta;
    reps.push_back(check_CW1omega(jet, w, eta));
  }
  rep["reports"] = json::array();
  const ConditionReport* failed = nullptr;
  for (const auto& r : reps) {
    rep["reports"].push_back(io::to_json(r));
    if (!r.holds && !failed) failed = &r;
  }
  if (failed) return refused(std::move(rep), *failed);
  rep["verdict"] = "holds";
  return {kOk, std::move(rep)};
}

inline Outcome cmd_minimal(const RunConfig& c) {
  Jet1 jet = need_jet(c);
  require_res(c.res);
  json rep = header(c);
  auto m = build_m(jet);
  auto fac = factorize(m);
  rep["pieces"] = json::array();
  for (const auto& p : m.pieces()) rep["pieces"].push_back({{"slope", io::vec(p.slope)}, {"intercept", io::num(p.intercept)}});
  json basis = json::array();
  for (int r = 0; r < fac.k; ++r) basis.push_back(io::vec(fac.basis.row(r).transpose()));
  rep["factorization"] = {{"k", fac.k}, {"linear_part", io::vec(fac.linear_part)}, {"basis", basis}, {"coercive", fac.coercive()}};
  rep["condition_C"] = io::to_json(check_C(jet));
  if (!c.out.empty()) {
    Box box = box_option(c, jet.dim).value_or(Box::bounding(jet.points).expanded(1.0));
    GridSpec s = GridSpec::uniform(box, c.res ? c.res : default_resolution(jet.dim));
    ScalarGrid g;
    g.spec = s;
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto e = m.eval(s.node(i));
      g.values.push_back(e.value);
      g.grads.push_back(e.subgradient);
    }
    std::ofstream f(out_dir(c) / "m.csv");
    io::write_grid_csv(f, g);
    rep["grid"] = {{"file", "m.csv"}, {"nodes", s.size()}};
  }
  rep["verdict"] = "ok";
  return {kOk, std::move(rep)};
}

inline Outcome cmd_whitney(const RunConfig& c) {
  Jet1 jet = need_jet(c);
  json rep = header(c);
  Box hull = Box::bounding(jet.points);
  Box box = box_option(c, jet.dim).value_or(hull.expanded(0.5 * (1.0 + hull.diameter())));
  CubeDecomposition dec(ClosedSet::points(jet.dim, jet.points), box, c.max_generation);
  rep["cubes"] = dec.cubes().size();
  rep["truncated"] = dec.truncated().size();
  rep["max_generation"] = dec.max_generation();
  rep["collar_radius"] = io::num(dec.collar_radius());
  rep["constants"] = io::to_json(dec.constants());
  if (!c.out.empty()) {
    std::ofstream f(out_dir(c) / "cubes.csv");
    for (int i = 0; i < jet.dim; ++i) f << "c" << i << ",";
    f << "side,generation,nearest\n";
    for (const auto& q : dec.cubes()) {
      for (int i = 0; i < jet.dim; ++i) f << io::fmt(q.center(i)) << ",";
      f << io::fmt(q.side) << "," << q.generation << "," << q.nearest << "\n";
    }
    rep["file"] = "cubes.csv";
  }
  rep["verdict"] = "ok";
  return {kOk, std::move(rep)};
}

inline Outcome cmd_extend(const RunConfig& c) {
  Jet1 jet = need_jet(c);
  require_res(c.res);
  json rep = header(c);
  rep["class"] = c.cls;
  std::optional<ExtensionField> F;
  try {
    if (!is_omega_class(c.cls)) {
      C1Options o;
      o.eps = c.eps;
      o.box = box_option(c, jet.dim);
      if (c.res) o.res = c.res;
      auto r = extend_c1(jet, o);
      rep["report"] = io::to_json(r.report);
      F.emplace(std::move(r.F));
    } else {
      Modulus w = modulus_for(c);
      rep["omega"] = w.describe();
      OmegaOptions o;
      o.eta = c.eta;
      o.box = box_option(c, jet.dim);
      o.res = c.res;
      o.seed = c.seed;
      auto r = extend_c1omega(jet, w, o);
      rep["report"] = io::to_json(r.report);
      F.emplace(std::move(r.F));
    }
  } catch (const Refusal& e) {
    return refused(std::move(rep), e.report());
  }
  if (!c.out.empty()) {
    GridSpec s = F->grid() ? F->grid()->spec : make_grid(F->box(), c.res ? c.res : default_resolution(jet.dim));
    std::ofstream f(out_dir(c) / "F.csv");
    io::write_grid_csv(f, sample_field(*F, s));
    rep["grid"] = {{"file", "F.csv"}, {"nodes", s.size()}};
  }
  rep["verdict"] = "extended";
  return {kOk, std::move(rep)};
}

inline EnvelopeMethod parse_method(const std::string& m) {
  if (m == "auto") return EnvelopeMethod::automatic;
  if (m == "hull") return EnvelopeMethod::hull;
  if (m == "lp") return EnvelopeMethod::lp;
  throw InvalidInput("--method must be auto, hull or lp");
}

inline Outcome cmd_envelope(const RunConfig& c) {
  if (c.grid.empty()) throw InvalidInput("--grid is required");
  ScalarGrid g = io::grid_from_csv(io::read_file(c.grid));
  json rep = header(c);
  auto env = conv_envelope_grid(g, parse_method(c.method));
  rep["nodes"] = g.spec.size();
  rep["method"] = to_string(env.method);
  rep["contact_nodes"] = std::count(env.contact.begin(), env.contact.end(), 1);
  rep["kk"] = io::to_json(kk_bound_check(g, io::parse_modulus(c.omega)));
  if (!c.out.empty()) {
    std::ofstream f(out_dir(c) / "envelope.csv");
    io::write_grid_csv(f, env.envelope);
    rep["file"] = "envelope.csv";
  }
  rep["verdict"] = "ok";
  return {kOk, std::move(rep)};
}

inline Outcome cmd_body(const RunConfig& c, bool class_given, bool eta_given) {
  if (c.normals.empty()) throw InvalidInput("--normals is required");
  require_res(c.res);
  NormalData d = io::load_normals(c.normals);
  if (class_given) {
    if (c.cls == "c1") d.cls = BodyClass::c1;
    else if (c.cls == "c11") d.cls = BodyClass::c11;
    else throw InvalidInput("body --class must be c1 or c11");
  }
  if (eta_given) d.eta = *c.eta;
  json rep = header(c);
  rep["class"] = to_string(d.cls);
  rep["points"] = d.K.size();
  auto conds = body_condition_reports(d);
  rep["conditions"] = json::array();
  for (const auto& r : conds) rep["conditions"].push_back(io::to_json(r));
  for (const auto& r : conds)
    if (!r.holds) return refused(std::move(rep), r);
  BodyOptions o;
  o.box = box_option(c, d.dim);
  o.res = c.res;
  o.seed = c.seed;
  auto r = interpolate_body(d, o);
  rep["diagnostics"] = io::to_json(r.report);
  if (!c.out.empty()) {
    fs::path dir = out_dir(c);
    std::ofstream v(dir / "contour_vertices.csv"), e(dir / "contour_cells.csv");
    io::write_contour_csv(v, e, r.contour);
    std::ofstream f(dir / "potential.csv");
    io::write_grid_csv(f, r.Fgrid);
    rep["files"] = {"contour_vertices.csv", "contour_cells.csv", "potential.csv"};
  }
  rep["verdict"] = "interpolated";
  return {kOk, std::move(rep)};
}

struct FixtureRow {
  std::string name;
  std::string expected;
  std::string observed;
  std::string detail;
};

inline std::vector<FixtureRow> run_fixtures(std::uint64_t seed) {
  std::vector<FixtureRow> rows;
  {
    int refused = 0;
    for (int i = 0; i <= 100; ++i) {
      Jet1 j = examples::five_point_abs(-1.0 + 0.02 * i);
      refused += !(check_C(j).holds && check_CW1(j).holds);
    }
    rows.push_back({"five-point |x|", "refuse", refused == 101 ? "refuse" : "pass",
                    std::to_string(refused) + "/101 choices of G(0) refused"});
  }
  {
    Jet1 j = examples::tent_jet();
    auto m = build_m(j);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(-5, 5), uy(2, 8);
    double err = 0.0;
    for (int i = 0; i < 1000; ++i) {
      Vec p = make_vec({ux(rng), uy(rng)});
      err = std::max(err, std::abs(m(p) - std::max(p(0) + p(1) - 1, -p(0) + p(1) - 1)));
    }
    bool kink = m.eval(make_vec({0.0, 3.0})).active.size() >= 2;
    bool ok = check_C(j).holds && err < 1e-12 && kink;
    std::ostringstream os;
    os << "max formula error " << err << "; kink on x = 0 for y >= 2: " << (kink ? "yes" : "no");
    rows.push_back({"max-formula tent", "pass", ok ? "pass" : "fail", os.str()});
  }
  {
    Jet1 j = examples::shear_jet();
    auto rc = check_C(j);
    std::string observed = "pass", detail;
    try {
      extend_c1(j);
    } catch (const Refusal& e) {
      observed = "refuse";
      detail = "C margin " + io::fmt(rc.margin) + "; " + describe(e.report());
    }
    rows.push_back({"shear segment", "refuse", observed, detail});
  }
  {
    auto d = examples::circle_body(64);
    BodyOptions o;
    o.box = Box{make_vec({-2, -2}), make_vec({2, 2})};
    o.res = 201;
    o.seed = seed;
    auto r = interpolate_body(d, o);
    const auto& p = r.report;
    double hd = 0.0;
    for (const auto& v : r.contour.vertices) hd = std::max(hd, std::abs(v.norm() - 1.0));
    bool ok = p.max_K_to_contour <= 3 * p.h && hd <= 3 * p.h && p.min_alignment >= 0.99 && p.alpha_error <= 1e-9;
    std::ostringstream os;
    os << "contour to circle " << hd << " (3h = " << 3 * p.h << "); alignment " << p.min_alignment
       << "; |F(0) - alpha| " << p.alpha_error;
    rows.push_back({"circle body", "pass", ok ? "pass" : "fail", os.str()});
  }
  return rows;
}

inline Outcome cmd_fixtures(const RunConfig& c, std::ostream& out) {
  json rep = header(c);
  auto rows = run_fixtures(c.seed);
  bool all = true;
  rep["fixtures"] = json::array();
  out << std::left << std::setw(18) << "fixture" << std::setw(10) << "expected" << std::setw(10) << "observed"
      << "detail\n";
  for (const auto& r : rows) {
    bool ok = r.expected == r.observed;
    all &= ok;
    rep["fixtures"].push_back({{"name", r.name}, {"expected", r.expected}, {"observed", r.observed}, {"ok", ok}, {"detail", r.detail}});
    out << std::setw(18) << r.name << std::setw(10) << r.expected << std::setw(10) << r.observed << r.detail << "\n";
  }
  rep["verdict"] = all ? "all fixtures as expected" : "fixture mismatch";
  return {all ? kOk : kInternal, std::move(rep)};
}

}  // namespace detail

// Parses args (without the program name), runs the subcommand and returns
// the exit code. The JSON report goes to `out` (and to <out>/report.json).
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convex C1 and C1,w extension of 1-jets", "convexjet"};
  app.require_subcommand(1);
  RunConfig c;
  double eta = 0.0, eps = 0.0;

  auto common = [&](CLI::App* s) {
    s->add_option("--seed", c.seed, "seed for sampled checks");
    s->add_option("--out", c.out, "output directory");
  };
  auto jet = [&](CLI::App* s) { s->add_option("--jet", c.jet, "jet file (.json or .csv)")->required(); };
  auto grid = [&](CLI::App* s) {
    s->add_option("--box", c.box, "lo,hi or lo0,hi0,...");
    s->add_option("--res", c.res, "nodes per axis (>= 9)");
  };

  auto* check = app.add_subcommand("check", "evaluate the extension conditions");
  jet(check);
  check->add_option("--class", c.cls, "c1, c1omega or c11");
  check->add_option("--omega", c.omega, "linear, holder:a or a modulus file");
  auto* check_eta = check->add_option("--eta", eta, "eta in (0, 1/2]");
  common(check);

  auto* minimal = app.add_subcommand("minimal", "minimal extension and its factorization");
  jet(minimal);
  grid(minimal);
  common(minimal);

  auto* whitney = app.add_subcommand("whitney", "Whitney cubes around the carriers");
  jet(whitney);
  whitney->add_option("--box", c.box, "lo,hi or lo0,hi0,...");
  whitney->add_option("--max-gen", c.max_generation, "finest generation");
  common(whitney);

  auto* extend = app.add_subcommand("extend", "build a convex extension");
  jet(extend);
  extend->add_option("--class", c.cls, "c1, c1omega or c11");
  extend->add_option("--omega", c.omega, "linear, holder:a or a modulus file");
  auto* extend_eta = extend->add_option("--eta", eta, "eta in (0, 1/2]");
  auto* extend_eps = extend->add_option("--eps", eps, "smoothing epsilon (c1)");
  grid(extend);
  common(extend);

  auto* envelope = app.add_subcommand("envelope", "convex envelope of a grid function");
  envelope->add_option("--grid", c.grid, "grid csv (x0.., value)")->required();
  envelope->add_option("--method", c.method, "auto, hull or lp");
  envelope->add_option("--omega", c.omega, "modulus for the gradient check");
  common(envelope);

  auto* body = app.add_subcommand("body", "interpolate points with normals by a convex body");
  body->add_option("--normals", c.normals, "body data json")->required();
  auto* body_class = body->add_option("--class", c.cls, "c1 or c11");
  auto* body_eta = body->add_option("--eta", eta, "eta in (0, 1/2]");
  grid(body);
  common(body);

  auto* fixtures = app.add_subcommand("fixtures", "run the bundled examples");
  common(fixtures);

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  Outcome res;
  try {
    if (*check_eta || *extend_eta || *body_eta) c.eta = eta;
    if (*extend_eps) c.eps = eps;
    if (c.eta && !(*c.eta > 0.0 && *c.eta <= 0.5)) throw InvalidInput("--eta must lie in (0, 1/2]");
    if (*check) {
      c.command = "check";
      res = detail::cmd_check(c);
    } else if (*minimal) {
      c.command = "minimal";
      res = detail::cmd_minimal(c);
    } else if (*whitney) {
      c.command = "whitney";
      res = detail::cmd_whitney(c);
    } else if (*extend) {
      c.command = "extend";
      res = detail::cmd_extend(c);
    } else if (*envelope) {
      c.command = "envelope";
      res = detail::cmd_envelope(c);
    } else if (*body) {
      c.command = "body";
      res = detail::cmd_body(c, static_cast<bool>(*body_class), static_cast<bool>(*body_eta));
    } else {
      c.command = "fixtures";
      res = detail::cmd_fixtures(c, out);
    }
  } catch (const Refusal& e) {
    res = detail::refused(detail::header(c), e.report());
  } catch (const ConditionFailure& e) {
    res = {kRefused, detail::header(c)};
    res.report["verdict"] = "refused";
    res.report["message"] = e.what();
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << "\n";
    return kInvalid;
  } catch (const DomainError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kInvalid;
  } catch (const CertificationFailure& e) {
    err << "certification failure: " << e.what() << "\n";
    return kInternal;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }

  std::string text = res.report.dump(2) + "\n";
  if (c.command != "fixtures") out << text;
  if (!c.out.empty()) {
    try {
      io::write_text(detail::out_dir(c) / (c.command + ".json"), text);
    } catch (const InvalidInput& e) {
      err << "invalid input: " << e.what() << "\n";
      return kInvalid;
    }
  }
  if (res.code == kRefused) err << "refused: " << res.report.value("message", std::string("condition failure")) << "\n";
  return res.code;
}

}  // namespace convexjet::cli
