#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "mpgd/errors.hpp"
#include "mpgd/mesh.hpp"

namespace mpgd {

/// Profile functions psi_j(s) on the normalized arc length s in [0, 1] of an
/// interface or loaded edge: shifted Legendre polynomials 1, 2s - 1, 6s^2 - 6s + 1, ...
struct InterfaceBasis {
  std::size_t size = 3;
  int quadrature_points = 4;

  double value(std::size_t j, double s) const {
    const double x = 2.0 * s - 1.0;
    // Bonnet recursion on [-1, 1].
    double p0 = 1.0, p1 = x;
    if (j == 0) return p0;
    for (std::size_t n = 1; n < j; ++n) {
      const double p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
      p0 = p1;
      p1 = p2;
    }
    return p1;
  }

  /// psi_j(1 - s) = parity(j) * psi_j(s).
  double parity(std::size_t j) const { return (j % 2 == 0) ? 1.0 : -1.0; }

  Eigen::VectorXd values_at(double s) const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size));
    for (std::size_t j = 0; j < size; ++j) v(static_cast<Eigen::Index>(j)) = value(j, s);
    return v;
  }

  /// Gram matrix on a unit-length interface; well conditioned by construction.
  Eigen::MatrixXd unit_gram() const {
    const auto g = gauss(quadrature_points);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
    for (std::size_t q = 0; q < g.points.size(); ++q) {
      const auto v = values_at(g.points[q]);
      m += g.weights[q] * v * v.transpose();
    }
    return m;
  }

  void validate() const {
    if (size == 0) throw SchemaError("interface basis needs at least one function");
    if (2 * quadrature_points < static_cast<int>(2 * size)) throw SchemaError("interface quadrature too coarse for the basis");
  }
};

}  // namespace mpgd
