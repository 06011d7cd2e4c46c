#include <gtest/gtest.h>

#include <random>

#include "mpgd/interface.hpp"
#include "mpgd/model.hpp"

using namespace mpgd;

TEST(Interface, TraceAndJump) {
  Eigen::VectorXd u(8);
  u << 0, 1, 2, 3, 4, 5, 6, 7;
  const std::vector<std::size_t> nodes{3, 1};
  EXPECT_EQ(trace(u, nodes), Eigen::Vector2d(3, 1));
  EXPECT_EQ(trace(u, nodes, 2, 1), Eigen::Vector2d(7, 3));
  Eigen::VectorXd all(4);
  all << 6, 7, 2, 3;
  EXPECT_EQ(trace_all(u, nodes, 2), all);
  EXPECT_THROW(trace(u, {4}, 2), RangeError);

  EXPECT_DOUBLE_EQ(jump(Eigen::Vector2d(1, 2), Eigen::Vector2d(4, 6)), 5.0);
  EXPECT_DOUBLE_EQ(jump(all, all), 0.0);
  EXPECT_THROW(jump(Eigen::Vector2d(1, 2), Eigen::Vector3d(1, 2, 3)), SchemaError);
}

TEST(Interface, ExtractorInvertsConsistentEdgeLoads) {
  const StructuredMesh mesh(9, 7);
  const auto geo = patches::quarter_annulus("r", "w", {1, 3}, {1, 3});
  const Bindings p{{"r", 1.7}, {"w", 2.2}};
  const InterfaceBasis basis;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50, 50);
  for (const Edge e : {Edge::left, Edge::right, Edge::bottom, Edge::top}) {
    const FluxExtractor ex(mesh, geo, p, e, basis);
    for (int t = 0; t < 3; ++t) {
      Eigen::Vector3d c(u(rng), u(rng), u(rng));
      const auto f = edge_load_direct(mesh, geo, p, e, basis, c);
      EXPECT_LT((ex.extract(f) - c).norm(), 1e-10 * c.norm()) << to_string(e);
    }
  }
}

TEST(Interface, ExtractorOnPlateComponents) {
  const StructuredMesh mesh(7, 5);
  const auto geo = patches::rectangle(0.3, 0.2);
  const InterfaceBasis basis;
  for (int comp = 0; comp < 3; ++comp) {
    const FluxExtractor ex(mesh, geo, {}, Edge::right, basis, 3, comp);
    const Eigen::Vector3d c(1e3, -2e2, 5e1);
    const auto f = edge_load_direct(mesh, geo, {}, Edge::right, basis, c, 3, comp);
    EXPECT_LT((ex.extract(f) - c).norm(), 1e-10 * c.norm());
  }
}

// Flux balance of a solved patch: the reaction K u on a loaded edge (with the
// load removed from the right-hand side) is the applied profile.
TEST(Interface, ExtractFluxRecoversAppliedLoad) {
  const auto def = problems::rod(11, 5, 0.5);
  const auto& ref = def.references[0];
  const InterfaceBasis basis;
  const Bindings values{{"in1", 40.0}, {"in2", -10.0}, {"in3", 5.0}, {"out1", 3.0}, {"out2", 1.0}, {"out3", 0.0}};
  const auto k = direct_stiffness(ref, values);
  const auto f = direct_load(ref, basis, values);
  const auto d = direct_dirichlet(ref, basis, values);
  const Eigen::VectorXd u = solve_particular(k, f, d.dofs, &d.values);
  const FluxExtractor in(ref.mesh(), ref.geometry, values, ref.slot("in").edge, basis);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(u.size());
  const auto flux = extract_flux(k, u, zero, in);
  EXPECT_NEAR(flux(0), 40.0, 1e-8);
  EXPECT_NEAR(flux(1), -10.0, 1e-8);
  EXPECT_NEAR(flux(2), 5.0, 1e-8);
  EXPECT_LT(extract_flux(k, u, f, in).norm(), 1e-8);
  // Global balance: what enters on the left leaves through the prescribed edge.
  const FluxExtractor out(ref.mesh(), ref.geometry, values, ref.slot("out").edge, basis);
  EXPECT_NEAR(extract_flux(k, u, f, out)(0), -40.0, 1e-8);
}
