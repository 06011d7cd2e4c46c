#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "mpgd/assembly.hpp"
#include "mpgd/io.hpp"

using namespace mpgd;

namespace {

const Catalog& chain_catalog() {
  static const Catalog cat = [] {
    Catalog c = build_catalog(problems::chain(2, 5, 3), 1);
    VademecumOptions opt;
    opt.samples = 6;
    c.vademecum = vademecum_build(c, opt);
    return c;
  }();
  return cat;
}

const Bindings loads{{"q1", 40.0}, {"q2", -5.0}, {"q3", 1.0}, {"q4", 0.0}, {"q5", 0.0}, {"q6", 0.0}};

}  // namespace

TEST(ProblemJson, RoundTripIsStable) {
  for (const auto& def : {problems::lshape(9, 5), problems::plate(7, 3), problems::chain(3), problems::rod()}) {
    const auto j = to_json(def);
    const auto back = problem_from_json(j);
    EXPECT_EQ(to_json(back), j) << def.name;
    EXPECT_EQ(back.skeleton_size(), def.skeleton_size());
  }
}

TEST(ProblemJson, RejectsUnknownAndMissingKeys) {
  auto j = to_json(problems::lshape(9, 5));
  auto extra = j;
  extra["solver"] = "gmres";
  EXPECT_THROW(problem_from_json(extra), SchemaError);
  auto missing = j;
  missing.erase("modules");
  EXPECT_THROW(problem_from_json(missing), SchemaError);
  auto typo = j;
  typo["pgd"]["max_rnak"] = 3;
  EXPECT_THROW(problem_from_json(typo), SchemaError);
  auto wrong = j;
  wrong["basis"]["size"] = "three";
  EXPECT_THROW(problem_from_json(wrong), SchemaError);
  auto dangling = j;
  dangling["interfaces"][0]["l"]["module"] = "Omega9";
  EXPECT_THROW(problem_from_json(dangling), SchemaError);
}

TEST(ProblemJson, BindingsNeedNumbers) {
  EXPECT_EQ(bindings_from_json(Json{{"a", 1.5}, {"b", -2}}).at("b"), -2.0);
  EXPECT_THROW(bindings_from_json(Json{{"a", "x"}}), SchemaError);
  EXPECT_THROW(bindings_from_json(Json::array({1, 2})), SchemaError);
}

TEST(CatalogFormat, RoundTripIsByteIdentical) {
  const auto& cat = chain_catalog();
  const auto bytes = encode_catalog(cat);
  const auto back = decode_catalog(bytes);
  EXPECT_EQ(encode_catalog(back), bytes);
  ASSERT_TRUE(back.vademecum);
  EXPECT_EQ(vademecum_eval(*back.vademecum, loads), vademecum_eval(*cat.vademecum, loads));
  // The reloaded transfer functions evaluate identically.
  const auto a = online_problem(cat, loads), b = online_problem(back, loads);
  const Eigen::VectorXd lambda = Eigen::VectorXd::LinSpaced(3, -20.0, 30.0);
  EXPECT_EQ(a.defect(lambda), b.defect(lambda));
}

TEST(CatalogFormat, DetectsCorruption) {
  const auto bytes = encode_catalog(chain_catalog());
  EXPECT_THROW(decode_catalog(bytes.substr(0, bytes.size() / 2)), FormatError);
  EXPECT_THROW(decode_catalog(bytes + "x"), FormatError);
  EXPECT_THROW(decode_catalog("not a catalog"), FormatError);
  auto flipped = bytes;
  flipped[bytes.size() / 2] = static_cast<char>(flipped[bytes.size() / 2] ^ 0x40);
  EXPECT_THROW(decode_catalog(flipped), FormatError);
  auto version = bytes;
  version[8] = 7;
  try {
    decode_catalog(version);
    FAIL() << "version mismatch accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version 7"), std::string::npos);
  }
}

TEST(CatalogFormat, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "mpgd_test_catalog.bin").string();
  save_catalog(chain_catalog(), path);
  EXPECT_EQ(encode_catalog(load_catalog(path)), encode_catalog(chain_catalog()));
  std::filesystem::remove(path);
  EXPECT_THROW(load_catalog(path), Error);
}

TEST(Export, VtkAndCsvLayout) {
  const auto& cat = chain_catalog();
  const auto prob = online_problem(cat, loads);
  const auto rep = newton_solve(prob, Eigen::VectorXd::Zero(3));
  const auto field = assemble_global(prob, rep.lambda);

  std::ostringstream vtk;
  write_vtk(vtk, field);
  const auto s = vtk.str();
  EXPECT_EQ(s.rfind("# vtk DataFile Version 3.0\n", 0), 0u);
  EXPECT_NE(s.find("POINTS " + std::to_string(field.mesh.node_count) + " double"), std::string::npos);
  EXPECT_NE(s.find("CELLS 32 160"), std::string::npos);
  EXPECT_NE(s.find("CELL_TYPES 32"), std::string::npos);
  EXPECT_NE(s.find("SCALARS " + field.components[0] + " double 1"), std::string::npos);

  std::ostringstream csv;
  write_csv(csv, field);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "node,x,y," + field.components[0]);
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, field.mesh.node_count);

  const auto j = to_json(rep, cat.problem);
  EXPECT_EQ(j.at("lambda").size(), 3u);
  EXPECT_TRUE(j.at("jumps").contains("g1"));
  EXPECT_EQ(j.at("converged"), rep.converged);
  EXPECT_DOUBLE_EQ(j.at("relative_jump").get<double>(), rep.relative_jump());
}
