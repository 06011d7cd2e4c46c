#include <gtest/gtest.h>

#include <set>

#include "mpgd/regression.hpp"

using namespace mpgd;

namespace {

Eigen::VectorXd apply(const Eigen::MatrixXd& x, double (*f)(double, double)) {
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y(i) = f(x(i, 0), x(i, 1));
  return y;
}

double holdout_error(const SeparatedRegression& r, double (*f)(double, double), const Eigen::MatrixXd& x) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double v = f(x(i, 0), x(i, 1));
    const std::array<double, 2> p{x(i, 0), x(i, 1)};
    num += std::pow(r.evaluate(p) - v, 2);
    den += v * v;
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(Regression, LegendreValues) {
  const auto p = SeparatedRegression::legendre(0.5, 3);
  EXPECT_DOUBLE_EQ(p(0), 1.0);
  EXPECT_DOUBLE_EQ(p(1), 0.5);
  EXPECT_DOUBLE_EQ(p(2), -0.125);
  EXPECT_DOUBLE_EQ(p(3), -0.4375);
}

TEST(Regression, RecoversSeparableProduct) {
  auto f = [](double a, double b) { return (1.0 + a) * std::exp(-b); };
  const std::vector<double> lo{1.0, 1.0}, hi{3.0, 3.0};
  const auto x = latin_hypercube(400, lo, hi, 3);
  const auto r = fit_separated(x, apply(x, f), lo, hi);
  EXPECT_GE(r.rank(), 1u);
  EXPECT_LT(holdout_error(r, f, latin_hypercube(200, lo, hi, 4)), 1e-4);
}

TEST(Regression, RecoversSumOfTerms) {
  auto f = [](double a, double b) { return a * a - 3.0 * b + 1.0 / (a + b); };
  const std::vector<double> lo{1.0, 1.0}, hi{3.0, 3.0};
  const auto x = latin_hypercube(600, lo, hi, 5);
  const auto r = fit_separated(x, apply(x, f), lo, hi);
  EXPECT_GE(r.rank(), 2u);
  EXPECT_LT(holdout_error(r, f, latin_hypercube(200, lo, hi, 6)), 1e-3);
}

TEST(Regression, LogarithmicMapOnPositiveRanges) {
  SeparatedRegression r;
  r.lower = {1.0, -1.0};
  r.upper = {4.0, 1.0};
  r.logarithmic = {1, 0};
  EXPECT_NEAR(r.scaled(0, 2.0), 0.0, 1e-15);
  EXPECT_NEAR(r.scaled(1, 0.5), 0.5, 1e-15);
  RegressionOptions opt;
  opt.log_inputs = false;
  const Eigen::MatrixXd x = latin_hypercube(50, {1.0, -1.0}, {4.0, 1.0}, 1);
  const auto lin = fit_separated(x, x.col(0), {1.0, -1.0}, {4.0, 1.0}, opt);
  EXPECT_EQ(lin.logarithmic, (std::vector<std::uint8_t>{0, 0}));
  const auto lg = fit_separated(x, x.col(0), {1.0, -1.0}, {4.0, 1.0});
  EXPECT_EQ(lg.logarithmic, (std::vector<std::uint8_t>{1, 0}));
}

TEST(Regression, DegreeShrinksWithFewSamples) {
  const std::vector<double> lo{0.0, 0.0, 0.0}, hi{1.0, 1.0, 1.0};
  const auto x = latin_hypercube(30, lo, hi, 2);
  const auto r = fit_separated(x, x.col(0) + x.col(1), lo, hi);
  // 24 fitting samples over 3 inputs support a linear basis at most.
  EXPECT_EQ(r.degree, 1u);
}

TEST(Regression, PureNoisePrefersTheZeroModel) {
  const std::vector<double> lo{0.0, 0.0}, hi{1.0, 1.0};
  const auto x = latin_hypercube(200, lo, hi, 8);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd y(x.rows());
  for (auto& v : y) v = n(rng);
  EXPECT_LE(fit_separated(x, y, lo, hi).rank(), 1u);
}

TEST(Regression, ConstantAndZeroTargets) {
  const Eigen::MatrixXd none(4, 0);
  const auto c = fit_separated(none, Eigen::Vector4d(1, 2, 3, 6), {}, {});
  EXPECT_EQ(c.evaluate({}), 3.0);
  const auto x = latin_hypercube(40, {0.0}, {1.0}, 1);
  const auto z = fit_separated(x, Eigen::VectorXd::Zero(40), {0.0}, {1.0});
  EXPECT_EQ(z.rank(), 0u);
  const std::array<double, 1> p{0.3};
  EXPECT_EQ(z.evaluate(p), 0.0);
  EXPECT_THROW(z.evaluate({}), SchemaError);
}

TEST(Regression, RejectsInconsistentData) {
  const auto x = latin_hypercube(10, {0.0}, {1.0}, 1);
  EXPECT_THROW(fit_separated(x, Eigen::VectorXd::Zero(9), {0.0}, {1.0}), SchemaError);
  EXPECT_THROW(fit_separated(x, Eigen::VectorXd::Zero(10), {0.0, 0.0}, {1.0, 1.0}), SchemaError);
  RegressionOptions opt;
  opt.validation = 1.0;
  EXPECT_THROW(fit_separated(x, Eigen::VectorXd::Zero(10), {0.0}, {1.0}, opt), SchemaError);
}

TEST(LatinHypercube, OneSamplePerStratum) {
  const std::vector<double> lo{-1.0, 2.0}, hi{1.0, 5.0};
  const auto x = latin_hypercube(50, lo, hi, 17);
  for (int k = 0; k < 2; ++k) {
    std::set<long> strata;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double t = (x(i, k) - lo[static_cast<std::size_t>(k)]) / (hi[static_cast<std::size_t>(k)] - lo[static_cast<std::size_t>(k)]);
      ASSERT_GE(t, 0.0);
      ASSERT_LT(t, 1.0);
      strata.insert(static_cast<long>(std::floor(t * 50)));
    }
    EXPECT_EQ(strata.size(), 50u);
  }
  EXPECT_EQ(x, latin_hypercube(50, lo, hi, 17));
  EXPECT_NE(x, latin_hypercube(50, lo, hi, 18));
}
