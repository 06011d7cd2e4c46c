#pragma once

// Canonical-polyadic compression of coefficients sampled on a
// (row x parameter grid x ...) tensor, used to separate the parameter
// dependence of geometric metrics before operator assembly.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "mpgd/errors.hpp"

namespace mpgd {

/// Samples f(row, p_1, ..., p_D). Rows vary fastest, then p_1, then p_2, ...
struct SampledTensor {
  std::size_t rows = 0;
  std::vector<std::size_t> extents;  // grid sizes of the parameter directions
  Eigen::MatrixXd data;              // rows x prod(extents)

  std::size_t columns() const {
    return std::accumulate(extents.begin(), extents.end(), std::size_t{1}, std::multiplies<>());
  }
};

/// f(row, p) ~= sum_t row_modes(row, t) * prod_k param_modes[k](i_k, t).
struct CompressedCoefficients {
  Eigen::MatrixXd row_modes;
  std::vector<Eigen::MatrixXd> param_modes;
  double max_error = 0.0;
  bool reached = true;
  std::string warning;

  std::size_t terms() const { return static_cast<std::size_t>(row_modes.cols()); }
};

namespace detail {

/// Column of the outer product prod_k v_k over the multi-index layout of SampledTensor.
inline Eigen::VectorXd outer_column(const std::vector<Eigen::VectorXd>& v, const std::vector<std::size_t>& extents) {
  Eigen::VectorXd out = Eigen::VectorXd::Ones(1);
  for (std::size_t k = 0; k < extents.size(); ++k) {
    Eigen::VectorXd next(out.size() * static_cast<Eigen::Index>(extents[k]));
    for (std::size_t i = 0; i < extents[k]; ++i) next.segment(static_cast<Eigen::Index>(i) * out.size(), out.size()) = out * v[k](i);
    out = std::move(next);
  }
  return out;
}

/// Orthonormal basis of mode k (columns) keeping the discarded Frobenius energy below eps.
inline Eigen::MatrixXd mode_basis(const Eigen::MatrixXd& data, const std::vector<std::size_t>& extents, std::size_t k, double eps) {
  std::size_t stride = 1;
  for (std::size_t m = 0; m < k; ++m) stride *= extents[m];
  const auto n = static_cast<Eigen::Index>(extents[k]);
  const std::size_t outer = static_cast<std::size_t>(data.cols()) / (stride * extents[k]);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t s = 0; s < stride; ++s) {
      const auto base = static_cast<Eigen::Index>(s + o * stride * extents[k]);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) gram(i, j) += data.col(base + i * static_cast<Eigen::Index>(stride)).dot(data.col(base + j * static_cast<Eigen::Index>(stride)));
    }
  gram = gram.selfadjointView<Eigen::Lower>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
  // Eigenvalues ascend; drop the leading ones while their sum stays below eps^2.
  Eigen::Index drop = 0;
  double discarded = 0.0;
  while (drop < n - 1 && discarded + std::max(0.0, es.eigenvalues()(drop)) <= eps * eps) discarded += std::max(0.0, es.eigenvalues()(drop++));
  return es.eigenvectors().rightCols(n - drop).rowwise().reverse();
}

/// Contracts mode k of a (rows x extents) tensor with basis^T, shrinking extents[k] to basis.cols().
inline Eigen::MatrixXd contract_mode(const Eigen::MatrixXd& data, std::vector<std::size_t>& extents, std::size_t k, const Eigen::MatrixXd& basis) {
  std::size_t stride = 1;
  for (std::size_t m = 0; m < k; ++m) stride *= extents[m];
  const std::size_t n = extents[k], r = static_cast<std::size_t>(basis.cols());
  const std::size_t outer = static_cast<std::size_t>(data.cols()) / (stride * n);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(data.rows(), static_cast<Eigen::Index>(stride * r * outer));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t s = 0; s < stride; ++s)
      for (std::size_t a = 0; a < r; ++a) {
        auto dst = out.col(static_cast<Eigen::Index>(s + stride * (a + r * o)));
        for (std::size_t i = 0; i < n; ++i)
          dst += basis(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) * data.col(static_cast<Eigen::Index>(s + stride * (i + n * o)));
      }
  extents[k] = r;
  return out;
}

}  // namespace detail

/// Compresses the samples to max-norm error <= tol with at most max_rank terms.
///
/// Each parameter direction is truncated to an orthonormal basis (truncated
/// HOSVD) and the Tucker core is expanded into rank-one terms, largest first.
inline CompressedCoefficients cp_compress_coefficients(const SampledTensor& t, double tol, std::size_t max_rank = 200) {
  if (static_cast<std::size_t>(t.data.rows()) != t.rows || static_cast<std::size_t>(t.data.cols()) != t.columns())
    throw SchemaError("sampled tensor data does not match its extents");
  if (!(tol > 0.0)) throw SchemaError("compression tolerance must be positive");
  const std::size_t dims = t.extents.size();
  CompressedCoefficients out;
  out.param_modes.assign(dims, Eigen::MatrixXd());
  for (std::size_t k = 0; k < dims; ++k) out.param_modes[k].resize(static_cast<Eigen::Index>(t.extents[k]), 0);
  out.row_modes.resize(static_cast<Eigen::Index>(t.rows), 0);
  out.max_error = t.data.size() ? t.data.cwiseAbs().maxCoeff() : 0.0;
  if (out.max_error <= tol) return out;

  // Truncation error in Frobenius norm bounds the max-norm error; half the budget goes here.
  const double eps = 0.5 * tol / std::sqrt(static_cast<double>(std::max<std::size_t>(dims, 1)));
  std::vector<Eigen::MatrixXd> bases(dims);
  std::vector<std::size_t> ranks = t.extents;
  Eigen::MatrixXd core = t.data;
  for (std::size_t k = 0; k < dims; ++k) {
    bases[k] = detail::mode_basis(core, ranks, k, eps);
    core = detail::contract_mode(core, ranks, k, bases[k]);
  }

  // One term per core column, ordered by decreasing magnitude.
  struct Term {
    Eigen::Index column;
    double bound;
  };
  std::vector<Term> terms;
  for (Eigen::Index c = 0; c < core.cols(); ++c) {
    double bound = core.col(c).cwiseAbs().maxCoeff();
    std::size_t cc = static_cast<std::size_t>(c);
    for (std::size_t k = 0; k < dims; ++k) {
      bound *= bases[k].col(static_cast<Eigen::Index>(cc % ranks[k])).cwiseAbs().maxCoeff();
      cc /= ranks[k];
    }
    terms.push_back({c, bound});
  }
  std::stable_sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.bound > b.bound; });
  double dropped = 0.0;
  while (!terms.empty() && dropped + terms.back().bound <= 0.5 * tol) {
    dropped += terms.back().bound;
    terms.pop_back();
  }
  if (terms.size() > max_rank) terms.resize(max_rank);

  const auto count = static_cast<Eigen::Index>(terms.size());
  out.row_modes.resize(static_cast<Eigen::Index>(t.rows), count);
  for (std::size_t k = 0; k < dims; ++k) out.param_modes[k].resize(static_cast<Eigen::Index>(t.extents[k]), count);
  for (Eigen::Index j = 0; j < count; ++j) {
    out.row_modes.col(j) = core.col(terms[static_cast<std::size_t>(j)].column);
    std::size_t cc = static_cast<std::size_t>(terms[static_cast<std::size_t>(j)].column);
    for (std::size_t k = 0; k < dims; ++k) {
      out.param_modes[k].col(j) = bases[k].col(static_cast<Eigen::Index>(cc % ranks[k]));
      cc /= ranks[k];
    }
  }

  // Exact max-norm error of the reconstruction.
  std::vector<Eigen::VectorXd> v(dims);
  Eigen::MatrixXd rec = Eigen::MatrixXd::Zero(t.data.rows(), t.data.cols());
  for (Eigen::Index j = 0; j < count; ++j) {
    for (std::size_t k = 0; k < dims; ++k) v[k] = out.param_modes[k].col(j);
    rec.noalias() += out.row_modes.col(j) * detail::outer_column(v, t.extents).transpose();
  }
  out.max_error = (t.data - rec).cwiseAbs().maxCoeff();
  if (out.max_error > tol) {
    out.reached = false;
    out.warning = "compression stopped at " + std::to_string(out.terms()) + " terms with max error " + std::to_string(out.max_error) +
                  " > " + std::to_string(tol);
  }
  return out;
}

}  // namespace mpgd
