#pragma once

// Separated polynomial regression y(x) ~= sum_r prod_k P_k^r(x_k) with
// Legendre polynomials per input, fitted by greedy rank-one enrichment and
// alternating least squares. The rank is picked on a validation split.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "mpgd/errors.hpp"

namespace mpgd {

struct SeparatedRegression {
  std::vector<double> lower, upper;      // input ranges mapped to [-1, 1]
  std::vector<std::uint8_t> logarithmic;  // 1: the map is affine in log(x)
  std::size_t degree = 0;
  std::vector<Eigen::MatrixXd> factors;  // per input: (degree + 1) x rank Legendre coefficients
  double constant = 0.0;                 // the whole model when there are no inputs

  std::size_t inputs() const { return lower.size(); }
  std::size_t rank() const { return factors.empty() ? 0 : static_cast<std::size_t>(factors.front().cols()); }

  static Eigen::VectorXd legendre(double x, std::size_t degree) {
    Eigen::VectorXd p(static_cast<Eigen::Index>(degree + 1));
    p(0) = 1.0;
    if (degree > 0) p(1) = x;
    for (std::size_t n = 1; n < degree; ++n)
      p(static_cast<Eigen::Index>(n + 1)) = ((2.0 * n + 1.0) * x * p(static_cast<Eigen::Index>(n)) - n * p(static_cast<Eigen::Index>(n - 1))) / (n + 1.0);
    return p;
  }

  double scaled(std::size_t k, double x) const {
    double lo = lower[k], hi = upper[k];
    if (!logarithmic.empty() && logarithmic[k]) {
      lo = std::log(lo);
      hi = std::log(hi);
      x = std::log(x);
    }
    return hi > lo ? 2.0 * (x - lo) / (hi - lo) - 1.0 : 0.0;
  }

  double evaluate(std::span<const double> x) const {
    if (x.size() != inputs()) throw SchemaError("regression input has the wrong dimension");
    if (rank() == 0) return constant;
    Eigen::VectorXd prod = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(rank()));
    for (std::size_t k = 0; k < inputs(); ++k) prod = prod.cwiseProduct(factors[k].transpose() * legendre(scaled(k, x[k]), degree));
    return constant + prod.sum();
  }
};

struct RegressionOptions {
  std::size_t degree = 6;
  std::size_t rank = 16;        // upper bound
  std::size_t sweeps = 30;
  std::size_t backfit_passes = 1;
  std::size_t patience = 3;     // ranks without validation gain before stopping
  double validation = 0.2;      // fraction of the samples used to pick the rank
  double ridge = 1e-10;
  bool log_inputs = true;       // for inputs with a positive range
};

namespace detail {

/// One ALS fit of a rank-one term to `target`; `factors` holds the starting guess.
inline void fit_rank_one(const std::vector<Eigen::MatrixXd>& basis, const Eigen::VectorXd& target, std::vector<Eigen::VectorXd>& factors,
                         const RegressionOptions& opt) {
  const std::size_t dims = basis.size();
  const auto n = target.size();
  std::vector<Eigen::VectorXd> values(dims);
  for (std::size_t k = 0; k < dims; ++k) values[k] = basis[k] * factors[k];
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t sweep = 0; sweep < opt.sweeps; ++sweep) {
    for (std::size_t k = 0; k < dims; ++k) {
      Eigen::VectorXd other = Eigen::VectorXd::Ones(n);
      for (std::size_t l = 0; l < dims; ++l)
        if (l != k) other = other.cwiseProduct(values[l]);
      const Eigen::MatrixXd a = other.asDiagonal() * basis[k];
      Eigen::MatrixXd h = a.transpose() * a;
      h.diagonal().array() += opt.ridge * std::max(1.0, h.trace() / static_cast<double>(h.rows()));
      factors[k] = h.ldlt().solve(a.transpose() * target);
      values[k] = basis[k] * factors[k];
    }
    // Balance the factor scales so no direction absorbs the whole magnitude.
    double total = 1.0;
    for (std::size_t k = 0; k < dims; ++k) total *= factors[k].norm();
    if (total == 0.0) return;
    const double each = std::pow(total, 1.0 / static_cast<double>(dims));
    for (std::size_t k = 0; k < dims; ++k) {
      const double s = each / factors[k].norm();
      factors[k] *= s;
      values[k] *= s;
    }
    Eigen::VectorXd fit = Eigen::VectorXd::Ones(n);
    for (std::size_t k = 0; k < dims; ++k) fit = fit.cwiseProduct(values[k]);
    const double err = (target - fit).squaredNorm();
    if (std::abs(previous - err) <= 1e-10 * std::max(err, 1e-30 * target.squaredNorm())) break;
    previous = err;
  }
}

using Term = std::vector<Eigen::VectorXd>;

inline Eigen::VectorXd term_values(const std::vector<Eigen::MatrixXd>& basis, const Term& t) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(basis.front().rows());
  for (std::size_t k = 0; k < basis.size(); ++k) v = v.cwiseProduct(basis[k] * t[k]);
  return v;
}

/// Greedy enrichment up to `rank` terms with backfitting. With validation
/// data, stops once `patience` terms bring no gain and returns the best prefix.
inline std::vector<Term> enrich(const std::vector<Eigen::MatrixXd>& basis, const Eigen::VectorXd& y, std::size_t rank, const RegressionOptions& opt,
                                const std::vector<Eigen::MatrixXd>* vbasis = nullptr, const Eigen::VectorXd* vy = nullptr) {
  const std::size_t dims = basis.size();
  const auto nb = basis.front().cols();
  const double scale = y.cwiseAbs().maxCoeff();
  std::vector<Term> terms, best;
  double best_err = vy ? vy->squaredNorm() : 0.0;
  std::size_t stale = 0;
  Eigen::VectorXd residual = y;
  for (std::size_t r = 0; r < rank; ++r) {
    if (residual.cwiseAbs().maxCoeff() <= 1e-14 * scale) break;
    Term f(dims, Eigen::VectorXd::Zero(nb));
    for (auto& v : f) v(0) = 1.0;
    fit_rank_one(basis, residual, f, opt);
    residual -= term_values(basis, f);
    terms.push_back(std::move(f));
    for (std::size_t pass = 0; pass < opt.backfit_passes; ++pass)
      for (auto& t : terms) {
        residual += term_values(basis, t);
        fit_rank_one(basis, residual, t, opt);
        residual -= term_values(basis, t);
      }
    if (!vbasis) continue;
    Eigen::VectorXd e = *vy;
    for (const auto& t : terms) e -= term_values(*vbasis, t);
    const double err = e.squaredNorm();
    if (err < best_err * (1.0 - 1e-3)) {
      best_err = err;
      best = terms;
      stale = 0;
    } else if (++stale >= opt.patience) {
      break;
    }
  }
  return vbasis ? best : terms;
}

}  // namespace detail

/// Fits y over the rows of x (samples x inputs) with inputs ranging over [lower, upper].
inline SeparatedRegression fit_separated(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<double>& lower,
                                         const std::vector<double>& upper, const RegressionOptions& opt = {}) {
  if (x.rows() != y.size() || static_cast<std::size_t>(x.cols()) != lower.size() || lower.size() != upper.size())
    throw SchemaError("regression data dimensions disagree");
  if (x.rows() == 0) throw SchemaError("regression needs samples");
  if (!(opt.validation >= 0.0 && opt.validation < 1.0)) throw SchemaError("validation fraction must lie in [0, 1)");
  SeparatedRegression reg;
  reg.lower = lower;
  reg.upper = upper;
  const auto n = x.rows();
  const auto nv = static_cast<Eigen::Index>(std::floor(opt.validation * static_cast<double>(n)));
  // Keep a rank-one term well determined: at least 4 samples per coefficient.
  const auto per_input = static_cast<std::size_t>(n - nv) / (4 * std::max<std::size_t>(1, lower.size()));
  reg.degree = std::min(opt.degree, per_input > 1 ? per_input - 1 : 0);
  for (std::size_t k = 0; k < lower.size(); ++k) reg.logarithmic.push_back(opt.log_inputs && lower[k] > 0.0 && upper[k] > lower[k] ? 1 : 0);
  const std::size_t dims = lower.size();
  if (dims == 0) {
    reg.constant = y.mean();
    return reg;
  }
  const auto nb = static_cast<Eigen::Index>(reg.degree + 1);
  reg.factors.assign(dims, Eigen::MatrixXd(nb, 0));
  if (y.cwiseAbs().maxCoeff() == 0.0) return reg;

  auto basis_of = [&](Eigen::Index first, Eigen::Index count) {
    std::vector<Eigen::MatrixXd> b(dims, Eigen::MatrixXd(count, nb));
    for (std::size_t k = 0; k < dims; ++k)
      for (Eigen::Index i = 0; i < count; ++i)
        b[k].row(i) = SeparatedRegression::legendre(reg.scaled(k, x(first + i, static_cast<Eigen::Index>(k))), reg.degree);
    return b;
  };
  std::size_t rank = opt.rank;
  if (nv > 0 && n - nv > 0) {
    const auto fit_basis = basis_of(0, n - nv);
    const auto val_basis = basis_of(n - nv, nv);
    const Eigen::VectorXd vy = y.tail(nv);
    rank = detail::enrich(fit_basis, y.head(n - nv), opt.rank, opt, &val_basis, &vy).size();
  }
  const auto terms = detail::enrich(basis_of(0, n), y, rank, opt);
  for (std::size_t k = 0; k < dims; ++k) {
    reg.factors[k].resize(nb, static_cast<Eigen::Index>(terms.size()));
    for (std::size_t t = 0; t < terms.size(); ++t) reg.factors[k].col(static_cast<Eigen::Index>(t)) = terms[t][k];
  }
  return reg;
}

/// Latin-hypercube samples in [lower, upper] (samples x inputs).
inline Eigen::MatrixXd latin_hypercube(std::size_t samples, const std::vector<double>& lower, const std::vector<double>& upper, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(lower.size()));
  std::vector<std::size_t> perm(samples);
  for (std::size_t k = 0; k < lower.size(); ++k) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < samples; ++i)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          lower[k] + (upper[k] - lower[k]) * (static_cast<double>(perm[i]) + u(rng)) / static_cast<double>(samples);
  }
  return x;
}

}  // namespace mpgd
