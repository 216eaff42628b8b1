#pragma once

#include "convexjet/bodies.hpp"
#include "convexjet/whitney.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>

namespace convexjet::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Non-finite numbers become strings so every report is valid JSON.
inline json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline json vec(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v(i)));
  return a;
}

inline Vec parse_vec(const json& a, int dim, const std::string& what) {
  if (!a.is_array() || static_cast<int>(a.size()) != dim)
    throw InvalidInput(what + " must be an array of " + std::to_string(dim) + " numbers");
  Vec v(dim);
  for (int i = 0; i < dim; ++i) {
    if (!a[i].is_number()) throw InvalidInput(what + " has a non-numeric entry");
    v(i) = a[i].get<double>();
  }
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidInput(what + ": " + e.what());
  }
}

inline void check_schema(const json& j, const std::string& what) {
  if (j.contains("schema_version") && j["schema_version"] != kSchemaVersion)
    throw InvalidInput(what + ": unsupported schema_version");
}

inline int dim_of(const json& j, const std::vector<std::string>& keys) {
  if (j.contains("dim")) return j["dim"].get<int>();
  for (const auto& k : keys)
    if (j.contains(k) && j[k].is_array() && !j[k].empty() && j[k][0].is_array()) return static_cast<int>(j[k][0].size());
  throw InvalidInput("cannot infer the dimension");
}

// {"schema_version": 1, "dim": n, "points": [[...]], "values": [...], "grads": [[...]]}
inline Jet1 jet_from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("jet must be a JSON object");
  check_schema(j, "jet");
  for (const char* k : {"points", "values", "grads"})
    if (!j.contains(k) || !j[k].is_array()) throw InvalidInput(std::string("jet is missing the array '") + k + "'");
  Jet1 jet;
  jet.dim = dim_of(j, {"points"});
  if (jet.dim < 1 || jet.dim > kMaxDim) throw InvalidInput("jet dimension must be between 1 and 3");
  for (const auto& p : j["points"]) jet.points.push_back(parse_vec(p, jet.dim, "point"));
  for (const auto& v : j["values"]) {
    if (!v.is_number()) throw InvalidInput("jet values must be numbers");
    jet.values.push_back(v.get<double>());
  }
  for (const auto& g : j["grads"]) jet.grads.push_back(parse_vec(g, jet.dim, "gradient"));
  require_valid(jet);
  return jet;
}

inline json jet_to_json(const Jet1& jet) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["dim"] = jet.dim;
  j["points"] = json::array();
  j["values"] = json::array();
  j["grads"] = json::array();
  for (std::size_t i = 0; i < jet.size(); ++i) {
    j["points"].push_back(vec(jet.points[i]));
    j["values"].push_back(num(jet.values[i]));
    j["grads"].push_back(vec(jet.grads[i]));
  }
  return j;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput(what + ": not a number: '" + s + "'");
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

// Header row mandatory; every other row numeric.
inline CsvTable read_csv(const std::string& text, const std::string& what) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (first) {
      t.header = cells;
      for (auto& c : cells)
        if (!c.empty() && (std::isdigit(static_cast<unsigned char>(c[0])) || c[0] == '-' || c[0] == '.'))
          throw InvalidInput(what + ": a header row is required");
      first = false;
      continue;
    }
    if (cells.size() != t.header.size()) throw InvalidInput(what + ": row width differs from the header");
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_double(c, what));
    t.rows.push_back(std::move(row));
  }
  if (first) throw InvalidInput(what + ": empty file");
  return t;
}

// Columns x0..x{n-1}, f, g0..g{n-1}.
inline Jet1 jet_from_csv(const std::string& text) {
  auto t = read_csv(text, "jet csv");
  if (t.header.size() % 2 == 0 || t.header.size() < 3) throw InvalidInput("jet csv needs 2n + 1 columns");
  Jet1 jet;
  jet.dim = static_cast<int>(t.header.size() - 1) / 2;
  for (const auto& r : t.rows) {
    Vec x(jet.dim), g(jet.dim);
    for (int i = 0; i < jet.dim; ++i) {
      x(i) = r[i];
      g(i) = r[jet.dim + 1 + i];
    }
    jet.points.push_back(x);
    jet.values.push_back(r[jet.dim]);
    jet.grads.push_back(g);
  }
  require_valid(jet);
  return jet;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline Jet1 load_jet(const std::string& path) {
  std::string text = read_file(path);
  if (ends_with(path, ".csv")) return jet_from_csv(text);
  return jet_from_json(parse_json(text, path));
}

// {"dim": n, "K": [[...]], "N": [[...]], "class": "c1" | "c11", "M": m, "eta": e}
inline NormalData normals_from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("body data must be a JSON object");
  check_schema(j, "body data");
  for (const char* k : {"K", "N"})
    if (!j.contains(k) || !j[k].is_array()) throw InvalidInput(std::string("body data is missing the array '") + k + "'");
  NormalData d;
  d.dim = dim_of(j, {"K"});
  if (d.dim < 1 || d.dim > kMaxDim) throw InvalidInput("body dimension must be between 1 and 3");
  for (const auto& p : j["K"]) d.K.push_back(parse_vec(p, d.dim, "K point"));
  for (const auto& p : j["N"]) d.N.push_back(parse_vec(p, d.dim, "normal"));
  if (j.contains("class")) {
    auto c = j["class"].get<std::string>();
    if (c == "c1") d.cls = BodyClass::c1;
    else if (c == "c11") d.cls = BodyClass::c11;
    else throw InvalidInput("body class must be c1 or c11");
  }
  if (j.contains("M") && !j["M"].is_null()) d.M = j["M"].get<double>();
  if (j.contains("eta")) d.eta = j["eta"].get<double>();
  require_valid(d);
  return d;
}

inline json normals_to_json(const NormalData& d) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["dim"] = d.dim;
  j["class"] = to_string(d.cls);
  j["K"] = json::array();
  j["N"] = json::array();
  for (std::size_t i = 0; i < d.K.size(); ++i) {
    j["K"].push_back(vec(d.K[i]));
    j["N"].push_back(vec(d.N[i]));
  }
  if (d.M) j["M"] = *d.M;
  j["eta"] = d.eta;
  return j;
}

inline NormalData load_normals(const std::string& path) { return normals_from_json(parse_json(read_file(path), path)); }

// "linear", "holder:a", or a JSON file {"kind": "pwl", "knots": [[t, w], ...], "bounded": b}.
inline Modulus parse_modulus(const std::string& spec) {
  if (spec == "linear") return Modulus::linear();
  if (spec.rfind("holder:", 0) == 0) return Modulus::holder(parse_double(spec.substr(7), "holder exponent"));
  json j = parse_json(read_file(spec), spec);
  std::string kind = j.value("kind", "pwl");
  double bound = j.contains("bound") ? j["bound"].get<double>() : kInf;
  if (kind == "linear") return Modulus::linear(bound);
  if (kind == "holder") return Modulus::holder(j.at("alpha").get<double>(), bound);
  if (kind != "pwl") throw InvalidInput("unknown modulus kind '" + kind + "'");
  std::vector<std::pair<double, double>> knots;
  for (const auto& k : j.at("knots")) knots.emplace_back(k.at(0).get<double>(), k.at(1).get<double>());
  return Modulus::piecewise_linear(std::move(knots), j.value("bounded", false));
}

// "lo,hi" for every axis or "lo0,hi0,lo1,hi1,...".
inline Box parse_box(const std::string& s, int dim) {
  auto parts = split(s, ',');
  std::vector<double> v;
  for (const auto& p : parts) v.push_back(parse_double(p, "box"));
  Box b{Vec(dim), Vec(dim)};
  if (v.size() == 2) {
    b.lo.setConstant(v[0]);
    b.hi.setConstant(v[1]);
  } else if (static_cast<int>(v.size()) == 2 * dim) {
    for (int i = 0; i < dim; ++i) {
      b.lo(i) = v[2 * i];
      b.hi(i) = v[2 * i + 1];
    }
  } else {
    throw InvalidInput("box needs 2 or 2n numbers");
  }
  for (int i = 0; i < dim; ++i)
    if (!(b.hi(i) > b.lo(i))) throw InvalidInput("box must have positive extent on every axis");
  return b;
}

inline json to_json(const ConditionReport& r) {
  json j;
  j["condition"] = r.condition;
  j["holds"] = r.holds;
  j["worst_pair"] = {r.worst_pair.first, r.worst_pair.second};
  j["margin"] = num(r.margin);
  j["constant_used"] = num(r.constant_used);
  j["tolerance"] = num(r.tolerance);
  j["flags"] = r.flags;
  return j;
}

inline json to_json(const C1Report& r) {
  return {{"K", num(r.K)},
          {"eps", num(r.eps)},
          {"whitney_lip_ratio", num(r.whitney_lip_ratio)},
          {"max_generation", r.max_generation},
          {"cubes", r.cubes},
          {"carrier_value_error", num(r.carrier_value_error)},
          {"carrier_gradient_error", num(r.carrier_gradient_error)},
          {"lip_F", num(r.lip_F)},
          {"lip_bound", num(r.lip_bound)},
          {"lip_ok", r.lip_ok},
          {"g_minus_m_min", num(r.g_minus_m_min)},
          {"sandwich_min_slack", num(r.sandwich_min_slack)},
          {"majorant_ratio", num(r.majorant_ratio)},
          {"majorant_refinements", r.majorant_refinements},
          {"lip_H", num(r.lip_H)},
          {"lip_phi", num(r.lip_phi)},
          {"lip_phi_ok", r.lip_phi_ok},
          {"coercive_boundary", r.coercive_boundary},
          {"slope_jump_max", num(r.slope_jump_max)},
          {"envelope_method", r.envelope_method},
          {"nodes", r.nodes}};
}

inline json to_json(const OmegaReport& r) {
  return {{"eta", num(r.eta)},
          {"M", num(r.M)},
          {"k", r.k},
          {"affine", r.affine},
          {"carrier_value_error", num(r.carrier_value_error)},
          {"carrier_gradient_error", num(r.carrier_gradient_error)},
          {"measured_M_F", num(r.measured_M_F)},
          {"ratio", num(r.ratio)},
          {"gamma", num(r.gamma)},
          {"lambda", num(r.lambda)},
          {"lambda_ceiling", num(r.lambda_ceiling)},
          {"budget_min_slack", num(r.budget_min_slack)},
          {"cubes", r.cubes},
          {"max_generation", r.max_generation},
          {"psi_minus_c_min", num(r.psi_minus_c_min)},
          {"sandwich_min_slack", num(r.sandwich_min_slack)},
          {"reduced_condition_holds", r.reduced_condition_holds},
          {"reduced_condition_margin", num(r.reduced_condition_margin)},
          {"closure_min_slack", num(r.closure_min_slack)},
          {"envelope_method", r.envelope_method},
          {"nodes", r.nodes},
          {"flags", r.flags}};
}

inline json to_json(const BodyReport& r) {
  return {{"class", r.cls},
          {"alpha", num(r.alpha)},
          {"F0", num(r.F0)},
          {"alpha_error", num(r.alpha_error)},
          {"max_level_error", num(r.max_level_error)},
          {"min_alignment", num(r.min_alignment)},
          {"max_K_to_contour", num(r.max_K_to_contour)},
          {"midpoint_max_excess", num(r.midpoint_max_excess)},
          {"reverse_margin", num(r.reverse_margin)},
          {"contour_vertices", r.contour_vertices},
          {"contour_cells", r.contour_cells},
          {"h", num(r.h)},
          {"flags", r.flags}};
}

inline json to_json(const WhitneyConstants& c) {
  return {{"N", c.N},
          {"max_point_overlap", c.max_point_overlap},
          {"A1", num(c.A1)},
          {"A2", num(c.A2)},
          {"A", num(c.A)},
          {"max_neighbor_ratio", num(c.max_neighbor_ratio)}};
}

inline json to_json(const KKReport& r) {
  return {{"M_H", num(r.M_H)},         {"M_conv", num(r.M_conv)},     {"ratio", num(r.ratio)},
          {"lip_H", num(r.lip_H)},     {"lip_conv", num(r.lip_conv)}, {"modulus_ok", r.modulus_ok},
          {"lipschitz_ok", r.lipschitz_ok}};
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Coordinates, value, then gradient components when present.
inline void write_grid_csv(std::ostream& out, const ScalarGrid& g) {
  const int n = g.spec.dim();
  for (int i = 0; i < n; ++i) out << "x" << i << ",";
  out << "value";
  if (g.has_grads())
    for (int i = 0; i < n; ++i) out << ",g" << i;
  out << "\n";
  for (std::size_t k = 0; k < g.spec.size(); ++k) {
    Vec x = g.spec.node(k);
    for (int i = 0; i < n; ++i) out << fmt(x(i)) << ",";
    out << fmt(g.values[k]);
    if (g.has_grads())
      for (int i = 0; i < n; ++i) out << "," << fmt(g.grads[k](i));
    out << "\n";
  }
}

// Rebuilds a uniform grid from node rows (any order); gradient columns are ignored.
inline ScalarGrid grid_from_csv(const std::string& text) {
  auto t = read_csv(text, "grid csv");
  int n = 0;
  while (n < static_cast<int>(t.header.size()) && t.header[n] == "x" + std::to_string(n)) ++n;
  if (n < 1 || n > kMaxDim || n >= static_cast<int>(t.header.size()) || t.header[n] != "value")
    throw InvalidInput("grid csv needs columns x0.., value");
  GridSpec s;
  s.box = Box{Vec(n), Vec(n)};
  std::vector<std::vector<double>> axes(n);
  for (int i = 0; i < n; ++i) {
    for (const auto& r : t.rows) axes[i].push_back(r[i]);
    std::sort(axes[i].begin(), axes[i].end());
    axes[i].erase(std::unique(axes[i].begin(), axes[i].end()), axes[i].end());
    s.res[i] = static_cast<int>(axes[i].size());
    s.box.lo(i) = axes[i].front();
    s.box.hi(i) = axes[i].back();
  }
  s.check();
  if (s.size() != t.rows.size()) throw InvalidInput("grid csv is not a full tensor grid");
  ScalarGrid g;
  g.spec = s;
  g.values.assign(s.size(), kInf);
  for (const auto& r : t.rows) {
    std::array<int, kMaxDim> m{0, 0, 0};
    for (int i = 0; i < n; ++i) {
      double pos = (r[i] - s.box.lo(i)) / s.step(i);
      m[i] = static_cast<int>(std::lround(pos));
      if (std::abs(pos - m[i]) > 1e-6) throw InvalidInput("grid csv nodes are not uniformly spaced");
    }
    g.values[s.flatten(m)] = r[n];
  }
  return g;
}

inline void write_contour_csv(std::ostream& vertices, std::ostream& cells, const Contour& c) {
  for (int i = 0; i < c.dim; ++i) vertices << (i ? "," : "") << "x" << i;
  vertices << "\n";
  for (const auto& v : c.vertices) {
    for (int i = 0; i < c.dim; ++i) vertices << (i ? "," : "") << fmt(v(i));
    vertices << "\n";
  }
  cells << (c.dim == 3 ? "a,b,c\n" : "a,b\n");
  for (const auto& e : c.cells) {
    cells << e[0] << "," << e[1];
    if (c.dim == 3) cells << "," << e[2];
    cells << "\n";
  }
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw InvalidInput("cannot write " + p.string());
  out << text;
}

}  // namespace convexjet::io
