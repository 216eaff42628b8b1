#include "convexjet/cli.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

using namespace convexjet;
using convexjet::io::json;
namespace fs = std::filesystem;

namespace {

const std::string data_dir = CONVEXJET_DATA_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("convexjet_cli_" + std::to_string(::getpid())) / name;
  fs::create_directories(p);
  return p;
}

std::string write(const fs::path& p, const std::string& text) {
  io::write_text(p, text);
  return p.string();
}

}  // namespace

TEST(Io, JetJsonRoundTrip) {
  Jet1 j = examples::tent_jet();
  Jet1 k = io::jet_from_json(json::parse(io::jet_to_json(j).dump()));
  ASSERT_EQ(k.size(), j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    EXPECT_EQ(k.points[i], j.points[i]);
    EXPECT_EQ(k.values[i], j.values[i]);
    EXPECT_EQ(k.grads[i], j.grads[i]);
  }
}

TEST(Io, CsvJetMatchesColumns) {
  Jet1 j = io::load_jet(data_dir + "/quadratic_1d.csv");
  ASSERT_EQ(j.dim, 1);
  ASSERT_EQ(j.size(), 4u);
  EXPECT_DOUBLE_EQ(j.points[1](0), -0.4);
  EXPECT_DOUBLE_EQ(j.values[1], 0.16);
  EXPECT_DOUBLE_EQ(j.grads[1](0), -0.8);
  EXPECT_THROW(io::jet_from_csv("1,2,3\n4,5,6\n"), InvalidInput);
  EXPECT_THROW(io::jet_from_csv("x0,f,g0\n1,2\n"), InvalidInput);
}

TEST(Io, GridCsvRoundTrip) {
  ScalarGrid g;
  g.spec = GridSpec::uniform(Box{make_vec({-1, 0}), make_vec({1, 2})}, 11);
  for (std::size_t i = 0; i < g.spec.size(); ++i) g.values.push_back(g.spec.node(i).squaredNorm());
  std::ostringstream os;
  io::write_grid_csv(os, g);
  auto h = io::grid_from_csv(os.str());
  ASSERT_EQ(h.spec.size(), g.spec.size());
  for (std::size_t i = 0; i < g.spec.size(); ++i) EXPECT_EQ(h.values[i], g.values[i]);
  EXPECT_THROW(io::grid_from_csv("x0,value\n0,1\n0.5,1\n2,1\n"), InvalidInput);
}

TEST(Io, ModulusAndBoxSpecs) {
  EXPECT_EQ(io::parse_modulus("linear").kind(), Modulus::Kind::linear);
  auto h = io::parse_modulus("holder:0.5");
  EXPECT_EQ(h.kind(), Modulus::Kind::holder);
  EXPECT_DOUBLE_EQ(h(4.0), 2.0);
  EXPECT_THROW(io::parse_modulus("holder:1.5"), InvalidInput);
  auto dir = scratch("modulus");
  auto path = write(dir / "w.json", R"({"kind": "pwl", "knots": [[1, 1], [2, 1.5]]})");
  auto p = io::parse_modulus(path);
  EXPECT_DOUBLE_EQ(p(1.5), 1.25);

  Box b = io::parse_box("-1,2", 2);
  EXPECT_EQ(b.lo, make_vec({-1, -1}));
  EXPECT_EQ(b.hi, make_vec({2, 2}));
  Box c = io::parse_box("0,1,2,4", 2);
  EXPECT_EQ(c.lo, make_vec({0, 2}));
  EXPECT_THROW(io::parse_box("1,0", 1), InvalidInput);
  EXPECT_THROW(io::parse_box("0,1,2", 2), InvalidInput);
}

TEST(Cli, CheckQuadraticHolds) {
  auto r = run({"check", "--jet", data_dir + "/quadratic_2d.json"});
  EXPECT_EQ(r.code, 0);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["verdict"], "holds");
}

TEST(Cli, CheckShearRefusesNamingPair) {
  auto r = run({"check", "--jet", data_dir + "/shear_segment.json", "--class", "c1"});
  EXPECT_EQ(r.code, 3);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["refusal"]["condition"], "CW1");
  EXPECT_EQ(j["reports"][0]["condition"], "C");
  EXPECT_EQ(j["reports"][0]["margin"], 0.0);
  EXPECT_NE(r.err.find("worst pair"), std::string::npos);
}

TEST(Cli, FivePointAbsRefusedForEveryKinkGradient) {
  auto dir = scratch("five");
  for (double g0 : {-1.0, -0.3, 0.0, 0.5, 1.0}) {
    auto path = write(dir / "j.json", io::jet_to_json(examples::five_point_abs(g0)).dump());
    EXPECT_EQ(run({"check", "--jet", path}).code, 3) << g0;
  }
}

TEST(Cli, ExtendRefusesAndExtends) {
  EXPECT_EQ(run({"extend", "--jet", data_dir + "/shear_segment.json", "--class", "c1"}).code, 3);
  auto dir = scratch("extend");
  auto r = run({"extend", "--jet", data_dir + "/quadratic_2d.json", "--class", "c11", "--res", "41", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_LT(j["report"]["carrier_value_error"].get<double>(), 1e-9);
  auto g = io::grid_from_csv(io::read_file((dir / "F.csv").string()));
  EXPECT_EQ(g.spec.size(), 41u * 41u);
  EXPECT_TRUE(fs::exists(dir / "extend.json"));
}

TEST(Cli, ReportsAreDeterministic) {
  std::vector<std::string> args = {"extend", "--jet", data_dir + "/quadratic_1d.csv", "--class", "c1omega", "--seed", "7"};
  auto a = run(args), b = run(args);
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  auto c = run({"check", "--jet", data_dir + "/quadratic_2d.json", "--class", "c1omega", "--omega", "holder:0.5"});
  auto d = run({"check", "--jet", data_dir + "/quadratic_2d.json", "--class", "c1omega", "--omega", "holder:0.5"});
  EXPECT_EQ(c.out, d.out);
}

TEST(Cli, InvalidInputsExitFour) {
  auto dir = scratch("invalid");
  EXPECT_EQ(run({"check", "--jet", (dir / "missing.json").string()}).code, 4);
  EXPECT_EQ(run({"check", "--jet", write(dir / "bad.json", "{not json")}).code, 4);
  EXPECT_EQ(run({"check", "--jet", write(dir / "nan.json", R"({"points": [[0]], "values": [1], "grads": []})")}).code, 4);
  EXPECT_EQ(run({"check", "--jet", data_dir + "/quadratic_2d.json", "--class", "c2"}).code, 4);
  EXPECT_EQ(run({"check", "--jet", data_dir + "/quadratic_2d.json", "--class", "c1omega", "--eta", "0.7"}).code, 4);
  EXPECT_EQ(run({"extend", "--jet", data_dir + "/quadratic_2d.json", "--res", "5"}).code, 4);
  EXPECT_EQ(run({"extend", "--jet", data_dir + "/quadratic_2d.json", "--box", "0,0.1"}).code, 4);
  EXPECT_EQ(run({"nonsense"}).code, 4);
  EXPECT_EQ(run({}).code, 4);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, MinimalWhitneyEnvelope) {
  auto dir = scratch("mwe");
  auto m = run({"minimal", "--jet", data_dir + "/quadratic_2d.json", "--res", "21", "--out", dir.string()});
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_EQ(json::parse(m.out)["factorization"]["k"], 2);
  auto w = run({"whitney", "--jet", data_dir + "/quadratic_2d.json", "--max-gen", "5"});
  ASSERT_EQ(w.code, 0) << w.err;
  EXPECT_GT(json::parse(w.out)["cubes"].get<int>(), 0);
  // The minimal extension is convex already, so its envelope is itself.
  auto e = run({"envelope", "--grid", (dir / "m.csv").string(), "--out", dir.string()});
  ASSERT_EQ(e.code, 0) << e.err;
  auto in = io::grid_from_csv(io::read_file((dir / "m.csv").string()));
  auto env = io::grid_from_csv(io::read_file((dir / "envelope.csv").string()));
  for (std::size_t i = 0; i < in.values.size(); ++i) EXPECT_NEAR(env.values[i], in.values[i], 1e-9);
}

TEST(Cli, BodyWritesContour) {
  auto dir = scratch("body");
  auto r = run({"body", "--normals", data_dir + "/circle_body.json", "--box", "-2,2", "--res", "61", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_GE(j["diagnostics"]["min_alignment"].get<double>(), 0.99);
  auto v = io::read_csv(io::read_file((dir / "contour_vertices.csv").string()), "vertices");
  EXPECT_EQ(v.header, (std::vector<std::string>{"x0", "x1"}));
  EXPECT_GT(v.rows.size(), 20u);
  auto c = io::read_csv(io::read_file((dir / "contour_cells.csv").string()), "cells");
  EXPECT_EQ(c.header, (std::vector<std::string>{"a", "b"}));

  NormalData bad = examples::circle_body(8);
  for (auto& n : bad.N) n = -n;
  auto path = write(dir / "inward.json", io::normals_to_json(bad).dump());
  auto rb = run({"body", "--normals", path});
  EXPECT_EQ(rb.code, 3);
  EXPECT_EQ(json::parse(rb.out)["refusal"]["condition"], "O");
}

TEST(Cli, FixturesAllAsExpected) {
  auto r = run({"fixtures"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("circle body"), std::string::npos);
}
