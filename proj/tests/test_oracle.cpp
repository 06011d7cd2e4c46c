#include <gtest/gtest.h>

#include <random>

#include "mpgd/assembly.hpp"
#include "mpgd/oracle.hpp"

using namespace mpgd;

namespace {

Eigen::VectorXd zeros(const OnlineProblem& p) { return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size())); }

}  // namespace

TEST(Oracle, MonolithicSatisfiesPatchEquations) {
  // On a single module the glued solve is the patch solve.
  auto def = problems::chain(1, 7, 3);
  const Bindings g{{"q1", 30.0}, {"q2", -5.0}, {"q3", 2.0}, {"q4", -10.0}, {"q5", 0.0}, {"q6", 4.0}};
  const auto mono = solve_monolithic(def, g);
  const auto placed = place_modules(def, g);
  const auto mc = module_coordinates(def, 0, placed[0], g);
  const Eigen::VectorXd u = solve_patch(def.references[0], def.basis, module_values(def, placed[0], mc.base));
  EXPECT_LT((restrict_to_module(mono, 0) - u).norm(), 1e-10 * u.norm());
}

TEST(Oracle, ExactSurrogatesConvergeInOneStep) {
  const auto def = problems::lshape(11, 5);
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> p(1, 3), b(-100, 100);
  for (int t = 0; t < 3; ++t) {
    std::array<double, 6> x, beta;
    for (auto& v : x) v = p(rng);
    for (auto& v : beta) v = b(rng);
    const auto g = problems::lshape_parameters(x, beta);
    const OnlineProblem prob(def, exact_surrogates(def, g), g, CouplingMode::jump);
    const auto rep = newton_solve(prob, zeros(prob));
    ASSERT_TRUE(rep.converged);
    EXPECT_EQ(rep.iterations, 1u);
    EXPECT_LE(rep.residual_norms.back(), 1e-10 * rep.residual_scale);
    // A three-mode skeleton is close to, not equal to, the glued solution.
    const auto c = compare(assemble_global(prob, rep.lambda), solve_monolithic(def, g));
    EXPECT_LT(c.relative_l2, 0.05);
  }
}

TEST(Oracle, FluxCouplingWithExactSurrogatesIsExact) {
  const auto def = problems::rod(11, 5, 0.5);
  const Bindings g{{"q1", 25.0}, {"q2", 0.0}, {"q3", 0.0}};
  const OnlineProblem prob(def, exact_surrogates(def, g), g, CouplingMode::flux);
  const auto rep = newton_solve(prob, zeros(prob));
  EXPECT_EQ(rep.iterations, 1u);
  EXPECT_LT(compare(assemble_global(prob, rep.lambda), solve_monolithic(def, g)).relative_l2, 1e-9);
}

TEST(Oracle, MissingDirichletDataIsSingular) {
  auto def = problems::chain(1, 5, 3);
  def.references[0].dirichlet.clear();
  EXPECT_THROW(solve_monolithic(def, {{"q1", 1}, {"q2", 0}, {"q3", 0}, {"q4", 0}, {"q5", 0}, {"q6", 0}}), Error);
}

TEST(Oracle, CompareMeasuresRelativeAndMaxError) {
  Eigen::MatrixXd a(3, 2), b(3, 2);
  b << 1, 0, 0, 2, 2, 0;
  a = b;
  a(1, 1) = 5.0;
  const auto c = compare(a, b);
  EXPECT_DOUBLE_EQ(c.max_abs, 3.0);
  EXPECT_DOUBLE_EQ(c.relative_l2, 1.0);
  const auto masked = compare(a, b, {true, false, true});
  EXPECT_EQ(masked.relative_l2, 0.0);
  EXPECT_EQ(masked.max_abs, 0.0);
  EXPECT_DOUBLE_EQ(compare(b, Eigen::MatrixXd::Zero(3, 2)).relative_l2, 3.0);
  EXPECT_THROW(compare(a, Eigen::MatrixXd::Zero(2, 2)), SchemaError);
  EXPECT_THROW(compare(a, b, {true}), SchemaError);
}
