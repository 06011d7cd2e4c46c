#pragma once

// Interface traces, jumps and consistent flux extraction.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mpgd/basis.hpp"
#include "mpgd/errors.hpp"
#include "mpgd/geometry.hpp"
#include "mpgd/mesh.hpp"
#include "mpgd/physics.hpp"

namespace mpgd {

/// Values of one DOF component at the given nodes, in node order.
inline Eigen::VectorXd trace(const Eigen::VectorXd& u, const std::vector<std::size_t>& nodes, int dofs_per_node = 1, int component = 0) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto dof = nodes[k] * static_cast<std::size_t>(dofs_per_node) + static_cast<std::size_t>(component);
    if (dof >= static_cast<std::size_t>(u.size())) throw RangeError("trace node outside the field");
    t(static_cast<Eigen::Index>(k)) = u(static_cast<Eigen::Index>(dof));
  }
  return t;
}

/// Every component at the given nodes, node-major.
inline Eigen::VectorXd trace_all(const Eigen::VectorXd& u, const std::vector<std::size_t>& nodes, int dofs_per_node = 1) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(nodes.size()) * dofs_per_node);
  for (int c = 0; c < dofs_per_node; ++c) {
    const auto one = trace(u, nodes, dofs_per_node, c);
    for (Eigen::Index k = 0; k < one.size(); ++k) t(k * dofs_per_node + c) = one(k);
  }
  return t;
}

/// Euclidean norm of the difference of two traces.
inline double jump(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw SchemaError("trace lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  return (a - b).norm();
}

/// Recovers profile coefficients c from nodal edge forces r = sum_j c_j L_j,
/// with L_j the consistent nodal load of psi_j: (psi^T L) c = psi^T r.
class FluxExtractor {
 public:
  FluxExtractor() = default;
  FluxExtractor(const StructuredMesh& mesh, const GeometryParametrization& geometry, const Bindings& p, Edge edge, const InterfaceBasis& basis,
                int dofs_per_node = 1, int component = 0)
      : dofs_per_node_(dofs_per_node), component_(component) {
    nodes_ = mesh.edge_nodes(edge);
    const auto n = static_cast<Eigen::Index>(nodes_.size());
    const auto r = static_cast<Eigen::Index>(basis.size);
    psi_.resize(n, r);
    Eigen::MatrixXd loads(n, r);
    for (Eigen::Index j = 0; j < r; ++j) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(r);
      e(j) = 1.0;
      loads.col(j) = trace(edge_load_direct(mesh, geometry, p, edge, basis, e, dofs_per_node, component), nodes_, dofs_per_node, component);
      for (Eigen::Index k = 0; k < n; ++k) psi_(k, j) = basis.value(static_cast<std::size_t>(j), static_cast<double>(k) / static_cast<double>(n - 1));
    }
    const Eigen::MatrixXd m = psi_.transpose() * loads;
    lu_ = m.fullPivLu();
    if (lu_.rank() < r || !(lu_.rcond() > 1e-12)) throw SolverError("interface mass matrix is singular");
  }

  /// Coefficients of the force profile carried by the nodal forces `r` (full DOF vector).
  Eigen::VectorXd extract(const Eigen::VectorXd& r) const { return lu_.solve(psi_.transpose() * trace(r, nodes_, dofs_per_node_, component_)); }

  const std::vector<std::size_t>& nodes() const { return nodes_; }

 private:
  std::vector<std::size_t> nodes_;
  int dofs_per_node_ = 1, component_ = 0;
  Eigen::MatrixXd psi_;
  Eigen::FullPivLU<Eigen::MatrixXd> lu_;
};

/// Inward boundary flux (force) profile of a solved field on one edge: the
/// edge part of the residual K u - f projected onto the profile basis.
inline Eigen::VectorXd extract_flux(const SparseMatrix& k, const Eigen::VectorXd& u, const Eigen::VectorXd& f, const FluxExtractor& ex) {
  return ex.extract(k * u - f);
}

}  // namespace mpgd
