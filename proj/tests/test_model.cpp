#include <gtest/gtest.h>

#include <random>

#include "mpgd/catalog.hpp"
#include "mpgd/model.hpp"

using namespace mpgd;

namespace {

Bindings random_lshape(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> p(1.0, 3.0), b(-100.0, 100.0);
  std::array<double, 6> x, beta;
  for (auto& v : x) v = p(rng);
  for (auto& v : beta) v = b(rng);
  return problems::lshape_parameters(x, beta);
}

double signed_area(const GlobalMesh& m, std::size_t c) {
  double a = 0.0;
  for (int k = 0; k < 4; ++k) {
    const auto& p = m.points[m.cells[c][static_cast<std::size_t>(k)]];
    const auto& q = m.points[m.cells[c][static_cast<std::size_t>((k + 1) % 4)]];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

}  // namespace

TEST(Model, LShapeParameterCounts) {
  const auto def = problems::lshape();
  def.validate();
  const auto c = parameter_counts(def);
  EXPECT_EQ(c.local.at("channel"), 9u);
  EXPECT_EQ(c.local.at("corner"), 8u);
  EXPECT_EQ(c.global, 12u);
  // Two placed channels share one reference problem.
  EXPECT_EQ(def.references.size(), 2u);
  EXPECT_EQ(def.modules[0].reference, def.modules[2].reference);
}

TEST(Model, SkeletonLayout) {
  const auto def = problems::lshape(9, 5);
  EXPECT_EQ(def.skeleton_size(), 6u);
  EXPECT_EQ(def.block_offset(1), 3u);
  EXPECT_EQ(def.skeleton_range(4), std::make_pair(-1000.0, 1000.0));
  const auto plate = problems::plate(7, 3);
  EXPECT_EQ(plate.skeleton_size(), 9u);
  EXPECT_EQ(plate.skeleton_range(8).second, 1e4);
}

TEST(Model, ValidationRejectsBrokenDefinitions) {
  auto def = problems::lshape(9, 5);
  def.modules.clear();
  EXPECT_THROW(def.validate(), SchemaError);

  def = problems::lshape(9, 5);
  def.modules[1].parameters.erase("w");
  EXPECT_THROW(def.validate(), SchemaError);

  def = problems::lshape(9, 5);
  def.modules[0].loads["out"] = {"beta1", "beta2", "beta3"};
  EXPECT_THROW(def.validate(), SchemaError);

  def = problems::lshape(9, 5);
  def.references[1].n1 = 11;
  EXPECT_THROW(def.validate(), SchemaError);

  def = problems::lshape(9, 5);
  def.constraints.push_back({"Omega2.depth"});
  EXPECT_THROW(def.validate(), SchemaError);

  def = problems::lshape(9, 5);
  def.interfaces[1].m.module = "Omega2";
  EXPECT_THROW(def.validate(), SchemaError);

  def = problems::lshape(9, 5);
  def.references[0].dirichlet.clear();
  EXPECT_THROW(def.validate(), SchemaError);

  auto plate = problems::plate(7, 3);
  plate.modules[1].angle = 0.5;
  EXPECT_THROW(plate.validate(), SchemaError);
}

TEST(Model, PlacementChecksRangesAndConstraints) {
  const auto def = problems::lshape(9, 5);
  auto g = problems::lshape_parameters({2, 2, 2, 2, 2, 2});
  EXPECT_NO_THROW(place_modules(def, g));
  g["p3"] = 3.5;
  EXPECT_THROW(place_modules(def, g), RangeError);
  g = problems::lshape_parameters({2, 2, 2, 2, 2, 2});
  g.erase("beta2");
  EXPECT_THROW(check_global_parameters(def, g), SchemaError);
  g = problems::lshape_parameters({2, 2, 2, 2, 2, 2});
  EXPECT_THROW(place_modules(def, g, {{"Omega2.w", 2.5}}), SchemaError);
  EXPECT_THROW(place_modules(def, g, {{"Omega2.depth", 2.5}}), SchemaError);
  const auto placed = place_modules(def, g, {{"Omega1.w_in", 2.5}});
  EXPECT_EQ(placed[0].parameters.at("w_in"), 2.5);
}

TEST(Model, LShapeModulesMeetConformingly) {
  const auto def = problems::lshape();
  std::mt19937_64 rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto placed = place_modules(def, random_lshape(rng));
    EXPECT_LT(conformity_gap(def, placed), 1e-12);
    const auto mesh = glue(def, placed);
    EXPECT_EQ(mesh.node_count, 3u * 441u - 2u * 21u);
    EXPECT_EQ(mesh.cells.size(), 1200u);
    for (std::size_t c = 0; c < mesh.cells.size(); ++c) ASSERT_GT(signed_area(mesh, c), 0.0) << "cell " << c;
  }
}

TEST(Model, TraceNodesFollowOrientation) {
  const auto def = problems::chain(2, 5, 3);
  const auto l = trace_nodes(def, 0, false);
  const auto m = trace_nodes(def, 0, true);
  const auto placed = place_modules(def, {{"q1", 0}, {"q2", 0}, {"q3", 0}, {"q4", 0}, {"q5", 0}, {"q6", 0}});
  const auto pl = node_positions(def.references[0], placed[0]);
  const auto pm = node_positions(def.references[0], placed[1]);
  ASSERT_EQ(l.size(), m.size());
  for (std::size_t k = 0; k < l.size(); ++k) EXPECT_LT((pl[l[k]] - pm[m[k]]).norm(), 1e-14);

  auto rev = def;
  rev.interfaces[0].reversed = true;
  const auto r = trace_nodes(rev, 0, true);
  EXPECT_EQ(r.front(), m.back());
}

TEST(Model, ConformityViolationIsAGeometryError) {
  auto def = problems::chain(2, 5, 3);
  def.modules[1].translation.constant = Vec2(1.01, 0.0);
  const auto placed = place_modules(def, {{"q1", 0}, {"q2", 0}, {"q3", 0}, {"q4", 0}, {"q5", 0}, {"q6", 0}});
  EXPECT_THROW(check_conformity(def, placed), GeometryError);
}

TEST(Model, FixedEdgesOverrideSlotProfiles) {
  const auto def = problems::rod(5, 3);
  const auto& b = def.references[1];
  Bindings v{{"in1", 1.0}, {"in2", 0.0}, {"in3", 0.0}};
  const auto d = direct_dirichlet(b, def.basis, v);
  const auto left = edge_nodes(b, Edge::left), right = edge_nodes(b, Edge::right);
  for (auto n : left) EXPECT_DOUBLE_EQ(d.values(static_cast<Eigen::Index>(n)), 1.0);
  for (auto n : right) EXPECT_DOUBLE_EQ(d.values(static_cast<Eigen::Index>(n)), 0.0);
  EXPECT_EQ(d.dofs.size(), left.size() + right.size());
}

TEST(Model, ModuleCoordinatesLinkInterfaceModes) {
  const auto def = problems::lshape(9, 5);
  const auto g = problems::lshape_parameters({1.5, 2, 2.5, 2, 1.2, 2.8}, {10, 20, 30, 40, 50, 60});
  const auto placed = place_modules(def, g);
  // Omega1: w_out, length, w_in, in1..3 (loaded), out1..3 (side l of gamma1).
  const auto c1 = module_coordinates(def, 0, placed[0], g);
  EXPECT_EQ(c1.base[0], 2.0);
  EXPECT_EQ(c1.base[1], 2.0);
  EXPECT_EQ(c1.base[2], 1.5);
  EXPECT_EQ(c1.base[3], 10.0);
  EXPECT_EQ(c1.base[5], 30.0);
  ASSERT_EQ(c1.links.size(), 3u);
  EXPECT_EQ(c1.links[0].mode, 6u);
  EXPECT_EQ(c1.links[0].weight, 1.0);
  // The corner sees gamma1 from side m with the opposite sign.
  const auto c2 = module_coordinates(def, 1, placed[1], g);
  double weight = 0.0;
  for (const auto& l : c2.links)
    if (l.lambda == 0) weight = l.weight;
  EXPECT_EQ(std::abs(weight), 1.0);
  Eigen::VectorXd lambda = Eigen::VectorXd::LinSpaced(6, 1.0, 6.0);
  const auto at = c1.at(lambda);
  EXPECT_EQ(at[6], 1.0);
  EXPECT_EQ(at[8], 3.0);
}

TEST(Model, LShapeTopologyAndNominalGrid) {
  const auto def = problems::lshape();
  EXPECT_EQ(def.modules.size(), 3u);
  EXPECT_EQ(def.interfaces.size(), 2u);
  const auto c = parameter_counts(def);
  EXPECT_EQ(c.coordinates.at("channel"), 11u);
  EXPECT_EQ(c.coordinates.at("corner"), 10u);
  // Integer powers of 51 as the reference.
  std::uint64_t p10 = 1;
  for (int k = 0; k < 10; ++k) p10 *= 51;
  EXPECT_DOUBLE_EQ(c.nominal_dofs("corner", 51), static_cast<double>(p10));
  EXPECT_DOUBLE_EQ(c.nominal_dofs("channel", 51), static_cast<double>(p10 * 51));
}
