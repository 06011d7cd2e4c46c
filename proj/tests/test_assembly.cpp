#include <gtest/gtest.h>

#include <random>

#include "mpgd/assembly.hpp"
#include "mpgd/oracle.hpp"

using namespace mpgd;

namespace {

Bindings chain_loads(double q1, double q4 = 0.0) { return {{"q1", q1}, {"q2", 0.3 * q1}, {"q3", -0.1 * q1}, {"q4", q4}, {"q5", 0.0}, {"q6", 0.2 * q4}}; }

const Catalog& chain_catalog() {
  static const Catalog cat = build_catalog(problems::chain(4), 1);
  return cat;
}

const Catalog& small_lshape() {
  static const Catalog cat = build_catalog(problems::lshape(11, 5), 1);
  return cat;
}

const Catalog& rod_catalog() {
  static const Catalog cat = build_catalog(problems::rod(), 1);
  return cat;
}

Eigen::VectorXd zeros(const OnlineProblem& p) { return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size())); }

}  // namespace

TEST(Assembly, ChainJacobianBlocksFollowIncidence) {
  const auto& cat = chain_catalog();
  const auto p = online_problem(cat, chain_loads(50, -20));
  const auto jac = p.jacobian_blocks(zeros(p));
  ASSERT_EQ(jac.blocks(), 3u);
  // Defect of interface i touches alpha_j only through a module carrying both.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      const bool shared = i == j || (i > j ? i - j : j - i) == 1;
      EXPECT_EQ(jac.zero_block(i, j), !shared) << i << "," << j;
    }
}

TEST(Assembly, LShapeJacobianHasNoZeroBlocks) {
  // Both interfaces touch the corner module.
  const auto& cat = small_lshape();
  const auto p = online_problem(cat, problems::lshape_parameters({2, 2, 2, 2, 2, 2}, {10, 0, 0, -5, 0, 0}));
  const auto jac = p.jacobian_blocks(zeros(p));
  ASSERT_EQ(jac.blocks(), 2u);
  EXPECT_FALSE(jac.zero_block(0, 1));
  EXPECT_FALSE(jac.zero_block(1, 0));
}

TEST(Assembly, AnalyticJacobianMatchesFiniteDifferences) {
  const auto& cat = small_lshape();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> p(1, 3), b(-100, 100), a(-50, 50);
  for (int t = 0; t < 3; ++t) {
    std::array<double, 6> x, beta;
    for (auto& v : x) v = p(rng);
    for (auto& v : beta) v = b(rng);
    const auto prob = online_problem(cat, problems::lshape_parameters(x, beta));
    Eigen::VectorXd lambda(6);
    for (auto& v : lambda) v = a(rng);
    const auto exact = prob.jacobian_blocks(lambda).matrix;
    const auto fd = prob.jacobian_blocks(lambda, true).matrix;
    const double scale = exact.cwiseAbs().maxCoeff();
    EXPECT_LT((exact - fd).cwiseAbs().maxCoeff(), 1e-4 * scale);
  }
}

TEST(Assembly, NewtonReachesFirstOrderOptimality) {
  const auto& cat = small_lshape();
  const auto prob = online_problem(cat, problems::lshape_parameters({2, 2, 2, 2, 2, 2}, {60, -20, 5, -40, 10, 0}));
  const auto rep = newton_solve(prob, zeros(prob));
  ASSERT_TRUE(rep.converged);
  EXPECT_LE(rep.iterations, 5u);
  EXPECT_LE(prob.residual(rep.lambda).norm(), 1e-9 * rep.residual_scale);
  for (std::size_t k = 1; k < rep.residual_norms.size(); ++k) EXPECT_LT(rep.residual_norms[k], rep.residual_norms[k - 1]);
  EXPECT_LT(rep.relative_jump(), 0.01);
  EXPECT_FALSE(rep.clamped);
}

TEST(Assembly, ZeroLoadGivesZeroSkeleton) {
  const auto& cat = small_lshape();
  const auto prob = online_problem(cat, problems::lshape_parameters({1.3, 2.7, 2, 1.1, 2.9, 1.6}));
  const auto rep = newton_solve(prob, zeros(prob));
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(rep.lambda.norm(), 1e-12);
  const auto field = assemble_global(prob, rep.lambda);
  EXPECT_LT(field.values.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Assembly, LoadScalingScalesSolution) {
  const auto& cat = small_lshape();
  const std::array<double, 6> x{1.8, 2.4, 2.1, 1.5, 1.2, 2.6};
  const std::array<double, 6> beta{20, -5, 3, -30, 7, 1};
  for (double c : {-2.0, 0.5, 3.0}) {
    std::array<double, 6> scaled;
    for (std::size_t k = 0; k < 6; ++k) scaled[k] = c * beta[k];
    const auto a = online_problem(cat, problems::lshape_parameters(x, beta));
    const auto b = online_problem(cat, problems::lshape_parameters(x, scaled));
    const auto ra = newton_solve(a, zeros(a));
    const auto rb = newton_solve(b, zeros(b));
    EXPECT_LT((rb.lambda - c * ra.lambda).norm(), 2e-9 * std::abs(c) * ra.lambda.norm());
    const auto fa = assemble_global(a, ra.lambda), fb = assemble_global(b, rb.lambda);
    EXPECT_LT((fb.values - c * fa.values).norm(), 2e-9 * std::abs(c) * fa.values.norm());
  }
}

TEST(Assembly, InstantEvaluationClampsToRanges) {
  const auto& cat = small_lshape();
  const auto prob = online_problem(cat, problems::lshape_parameters({2, 2, 2, 2, 2, 2}, {10, 0, 0, 0, 0, 0}));
  Eigen::VectorXd far = Eigen::VectorXd::Constant(6, 5000.0);
  const auto rep = evaluate_equilibrium(prob, far);
  EXPECT_TRUE(rep.clamped);
  EXPECT_LE(rep.lambda.maxCoeff(), 1000.0);
  EXPECT_EQ(rep.iterations, 0u);
}

TEST(Assembly, ModeMustMatchSlotKind) {
  EXPECT_THROW(online_problem(rod_catalog(), {{"q1", 1}, {"q2", 0}, {"q3", 0}}, CouplingMode::jump), SchemaError);
  EXPECT_THROW(online_problem(chain_catalog(), chain_loads(1), CouplingMode::flux), SchemaError);
}

TEST(Assembly, FluxModeMatchesMonolithic) {
  const auto& cat = rod_catalog();
  const Bindings g{{"q1", 10.0}, {"q2", -3.0}, {"q3", 1.0}};
  const auto prob = online_problem(cat, g, CouplingMode::flux);
  const auto rep = newton_solve(prob, zeros(prob));
  ASSERT_TRUE(rep.converged);
  const auto c = compare(assemble_global(prob, rep.lambda), solve_monolithic(cat.problem, g));
  EXPECT_LT(c.relative_l2, 1e-6);
}

TEST(Assembly, StitchAveragesSharedNodes) {
  const auto& cat = chain_catalog();
  const auto prob = online_problem(cat, chain_loads(50, -20));
  const auto rep = newton_solve(prob, zeros(prob));
  const auto u = prob.module_fields(rep.lambda);
  const auto field = assemble_global(prob, rep.lambda);
  EXPECT_EQ(field.mesh.node_count, 4u * 81u - 3u * 9u);
  const auto l = trace_nodes(cat.problem, 0, false), m = trace_nodes(cat.problem, 0, true);
  const auto g = field.mesh.node_map[0][l[4]];
  EXPECT_EQ(g, field.mesh.node_map[1][m[4]]);
  EXPECT_NEAR(field.values(static_cast<Eigen::Index>(g), 0), 0.5 * (u[0](static_cast<Eigen::Index>(l[4])) + u[1](static_cast<Eigen::Index>(m[4]))), 1e-12);
}

TEST(Vademecum, ReproducesLinearLoadSweep) {
  const auto& cat = chain_catalog();
  VademecumOptions opt;
  opt.samples = 8;
  const auto v = vademecum_build(cat, opt);
  EXPECT_TRUE(v.design.empty());
  EXPECT_EQ(v.loads.size(), 6u);
  // Sweep q1 alone: the prediction must follow the Newton solution linearly.
  double ss_res = 0.0, ss_tot = 0.0;
  std::vector<Eigen::VectorXd> truth;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (int k = 0; k <= 10; ++k) {
    const double q = -100.0 + 20.0 * k;
    const auto prob = online_problem(cat, chain_loads(q));
    truth.push_back(newton_solve(prob, zeros(prob)).lambda);
    mean += truth.back() / 11.0;
  }
  for (int k = 0; k <= 10; ++k) {
    const auto pred = vademecum_eval(v, chain_loads(-100.0 + 20.0 * k));
    ss_res += (pred - truth[static_cast<std::size_t>(k)]).squaredNorm();
    ss_tot += (truth[static_cast<std::size_t>(k)] - mean).squaredNorm();
  }
  EXPECT_GE(1.0 - ss_res / ss_tot, 0.999);
}

TEST(Vademecum, WarmStartNeverCostsIterations) {
  const auto& cat = small_lshape();
  VademecumOptions opt;
  opt.samples = 200;
  opt.seed = 4;
  const auto v = vademecum_build(cat, opt);
  EXPECT_EQ(v.design.size(), 6u);
  EXPECT_EQ(v.fits.size(), 7u * 6u);
  EXPECT_GT(v.holdout_rms, 0.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> p(1, 3), b(-100, 100);
  for (int t = 0; t < 5; ++t) {
    std::array<double, 6> x, beta;
    for (auto& s : x) s = p(rng);
    for (auto& s : beta) s = b(rng);
    const auto g = problems::lshape_parameters(x, beta);
    const auto prob = online_problem(cat, g);
    const auto cold = newton_solve(prob, zeros(prob));
    const auto warm = newton_solve(prob, vademecum_eval(v, g));
    EXPECT_LE(warm.iterations, cold.iterations);
    EXPECT_LT((warm.lambda - cold.lambda).norm(), 1e-6 * cold.lambda.norm());
  }
}

TEST(Vademecum, RejectsDegenerateSampling) {
  VademecumOptions opt;
  opt.samples = 0;
  EXPECT_THROW(vademecum_build(chain_catalog(), opt), SchemaError);
  opt.samples = 10;
  opt.holdout = 1.0;
  EXPECT_THROW(vademecum_build(chain_catalog(), opt), SchemaError);
}
