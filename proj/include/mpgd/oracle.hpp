#pragma once

// Direct finite-element solves at fixed parameters: single patches, the glued
// multi-module problem and exact affine module surrogates.

#include <Eigen/Dense>

#include <vector>

#include "mpgd/assembly.hpp"
#include "mpgd/model.hpp"

namespace mpgd {

/// Direct solve of one reference problem; `values` binds every parameter and
/// any non-zero slot coefficients.
inline Eigen::VectorXd solve_patch(const ReferenceProblem& ref, const InterfaceBasis& basis, const Bindings& values) {
  const auto d = direct_dirichlet(ref, basis, values);
  return solve_particular(direct_stiffness(ref, values), direct_load(ref, basis, values), d.dofs, &d.values);
}

/// Module parameters and slot coefficients of a placed module at coordinates `c`.
inline Bindings module_values(const ProblemDefinition& def, const PlacedModule& pm, std::span<const double> c) {
  Bindings values = pm.parameters;
  const auto space = def.references[pm.reference].space(def.basis);
  for (std::size_t k = 0; k < space.size(); ++k) values[space.labels[k]] = c[k];
  return values;
}

/// Exact surrogates u(c) = u_0 + sum_k (c_k - c0_k) U_k for every module, with
/// U_k the direct response to a unit coefficient on each interface mode.
inline std::vector<Surrogate> exact_surrogates(const ProblemDefinition& def, const Bindings& globals, const Bindings& overrides = {}) {
  const auto placed = place_modules(def, globals, overrides);
  std::vector<Surrogate> out;
  for (std::size_t m = 0; m < placed.size(); ++m) {
    const auto& ref = def.references[placed[m].reference];
    const auto mc = module_coordinates(def, m, placed[m], globals);
    const Eigen::VectorXd u0 = solve_patch(ref, def.basis, module_values(def, placed[m], mc.base));
    std::map<std::size_t, Eigen::VectorXd> unit;
    const auto space = ref.space(def.basis);
    // Homogeneous data apart from the fixed-edge values.
    std::vector<double> none(space.size(), 0.0);
    for (const auto& [n, v] : placed[m].parameters) none[space.index(n)] = v;
    const Eigen::VectorXd base = solve_patch(ref, def.basis, module_values(def, placed[m], none));
    for (const auto& l : mc.links) {
      if (unit.count(l.mode)) continue;
      auto c = none;
      c[l.mode] = 1.0;
      unit[l.mode] = solve_patch(ref, def.basis, module_values(def, placed[m], c)) - base;
    }
    const auto c0 = mc.base;
    out.push_back({[u0, unit, c0](std::span<const double> c) {
                     Eigen::VectorXd u = u0;
                     for (const auto& [mode, v] : unit) u += (c[mode] - c0[mode]) * v;
                     return u;
                   },
                   [unit, n = u0.size()](std::span<const double>, std::size_t mode) {
                     auto it = unit.find(mode);
                     return it == unit.end() ? Eigen::VectorXd(Eigen::VectorXd::Zero(n)) : it->second;
                   }});
  }
  return out;
}

/// Direct solve of the glued problem: interface nodes carry one set of DOFs,
/// coupled slots are internal, loaded slots carry their load profiles.
inline GlobalField solve_monolithic(const ProblemDefinition& def, const Bindings& globals, const Bindings& overrides = {}) {
  def.validate();
  const auto placed = place_modules(def, globals, overrides);
  check_conformity(def, placed);
  GlobalField g;
  g.mesh = glue(def, placed);
  g.dofs_per_node = def.references.front().dofs_per_node();
  g.components = component_names(def);
  const int dpn = g.dofs_per_node;
  const auto n = static_cast<Eigen::Index>(g.mesh.node_count) * dpn;

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n), prescribed = Eigen::VectorXd::Zero(n);
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (std::size_t m = 0; m < placed.size(); ++m) {
    ReferenceProblem ref = def.references[placed[m].reference];
    if (ref.dofs_per_node() != dpn) throw SchemaError("modules mix physics");
    std::erase_if(ref.slots, [&](const Slot& s) {
      for (const auto& i : def.interfaces)
        for (const auto* side : {&i.l, &i.m})
          if (side->module == def.modules[m].name && std::find(side->slots.begin(), side->slots.end(), s.name) != side->slots.end()) return true;
      return false;
    });
    const auto mc = module_coordinates(def, m, placed[m], globals);
    Bindings values = placed[m].parameters;
    const auto space = def.references[placed[m].reference].space(def.basis);
    for (std::size_t k = 0; k < space.size(); ++k) values[space.labels[k]] = mc.base[k];
    auto dof = [&](std::size_t local) {
      return static_cast<Eigen::Index>(g.mesh.node_map[m][local / static_cast<std::size_t>(dpn)]) * dpn + static_cast<Eigen::Index>(local % static_cast<std::size_t>(dpn));
    };
    const SparseMatrix k = direct_stiffness(ref, values);
    for (int c = 0; c < k.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(k, c); it; ++it)
        trip.emplace_back(static_cast<int>(dof(static_cast<std::size_t>(it.row()))), static_cast<int>(dof(static_cast<std::size_t>(it.col()))), it.value());
    const Eigen::VectorXd fl = direct_load(ref, def.basis, values);
    for (Eigen::Index i = 0; i < fl.size(); ++i) f(dof(static_cast<std::size_t>(i))) += fl(i);
    const auto d = direct_dirichlet(ref, def.basis, values);
    for (auto i : d.dofs) {
      fixed[static_cast<std::size_t>(dof(i))] = 1;
      prescribed(dof(i)) = d.values(static_cast<Eigen::Index>(i));
    }
  }
  SparseMatrix k(n, n);
  k.setFromTriplets(trip.begin(), trip.end());
  std::vector<std::size_t> dofs;
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (fixed[i]) dofs.push_back(i);
  if (dofs.empty()) throw SolverError("singular system: missing Dirichlet data");
  const Eigen::VectorXd u = solve_particular(k, f, dofs, &prescribed);
  g.values = Eigen::Map<const Eigen::MatrixXd>(u.data(), dpn, static_cast<Eigen::Index>(g.mesh.node_count)).transpose();
  return g;
}

/// Nodal values of one module extracted from a global field (DOF layout of the module).
inline Eigen::VectorXd restrict_to_module(const GlobalField& g, std::size_t module) {
  const auto& map = g.mesh.node_map.at(module);
  Eigen::VectorXd u(static_cast<Eigen::Index>(map.size()) * g.dofs_per_node);
  for (std::size_t n = 0; n < map.size(); ++n)
    for (int c = 0; c < g.dofs_per_node; ++c) u(static_cast<Eigen::Index>(n) * g.dofs_per_node + c) = g.values(static_cast<Eigen::Index>(map[n]), c);
  return u;
}

struct Comparison {
  double relative_l2 = 0.0;
  double max_abs = 0.0;
};

/// |a - b| / |b| and max |a - b| over the rows selected by `mask` (all rows if empty).
inline Comparison compare(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const std::vector<bool>& mask = {}) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw SchemaError("compared fields differ in size");
  if (!mask.empty() && mask.size() != static_cast<std::size_t>(a.rows())) throw SchemaError("mask length differs from the field");
  double num = 0.0, den = 0.0, mx = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(i)]) continue;
    num += (a.row(i) - b.row(i)).squaredNorm();
    den += b.row(i).squaredNorm();
    mx = std::max(mx, (a.row(i) - b.row(i)).cwiseAbs().maxCoeff());
  }
  return {den > 0.0 ? std::sqrt(num / den) : std::sqrt(num), mx};
}

inline Comparison compare(const GlobalField& a, const GlobalField& b, const std::vector<bool>& mask = {}) { return compare(a.values, b.values, mask); }

}  // namespace mpgd
