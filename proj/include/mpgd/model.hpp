#pragma once

// Problem definitions: reference problems solved offline, placed modules that
// instantiate them, interfaces between modules and the global parameters that
// drive everything. Builders for the bundled example problems live in
// `problems`.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mpgd/basis.hpp"
#include "mpgd/errors.hpp"
#include "mpgd/geometry.hpp"
#include "mpgd/mesh.hpp"
#include "mpgd/pgd.hpp"
#include "mpgd/physics.hpp"

namespace mpgd {

enum class Physics { diffusion, plate };
enum class SlotKind { neumann, dirichlet };

inline std::string to_string(Physics p) { return p == Physics::diffusion ? "diffusion" : "plate"; }
inline Physics physics_from_string(const std::string& s) {
  if (s == "diffusion") return Physics::diffusion;
  if (s == "plate") return Physics::plate;
  throw SchemaError("unknown physics '" + s + "'");
}
inline std::string to_string(SlotKind k) { return k == SlotKind::neumann ? "neumann" : "dirichlet"; }
inline SlotKind slot_kind_from_string(const std::string& s) {
  if (s == "neumann") return SlotKind::neumann;
  if (s == "dirichlet") return SlotKind::dirichlet;
  throw SchemaError("unknown slot kind '" + s + "'");
}

/// Non-geometric parameter of a reference problem (plate thickness, modulus, ...).
struct ModelParameter {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  bool geometric_spacing = false;
};

/// Edge carrying R boundary coefficients: a flux/force profile (neumann) or a
/// prescribed trace profile (dirichlet) on one DOF component.
struct Slot {
  std::string name;
  Edge edge = Edge::left;
  SlotKind kind = SlotKind::neumann;
  int component = 0;
  double lower = -100.0;
  double upper = 100.0;

  std::string label(std::size_t j) const { return name + std::to_string(j + 1); }
};

struct DirichletEdge {
  Edge edge = Edge::bottom;
  double value = 0.0;
};

struct ReferenceProblem {
  std::string name;
  Physics physics = Physics::diffusion;
  std::size_t n1 = 21, n2 = 21;
  int quadrature = 2;
  double conductivity = 1.0;
  double compression_tol = 1e-6;
  GeometryParametrization geometry;
  std::vector<ModelParameter> parameters;
  std::size_t grid_points = 11;
  std::vector<DirichletEdge> dirichlet;
  std::vector<Slot> slots;

  int dofs_per_node() const { return physics == Physics::plate ? 3 : 1; }
  StructuredMesh mesh() const { return StructuredMesh(n1, n2); }
  std::size_t dofs() const { return n1 * n2 * static_cast<std::size_t>(dofs_per_node()); }

  const Slot& slot(const std::string& n) const {
    for (const auto& s : slots)
      if (s.name == n) return s;
    throw SchemaError("reference '" + name + "' has no slot '" + n + "'");
  }
  bool has_parameter(const std::string& n) const {
    for (const auto& p : geometry.parameters)
      if (p.name == n) return true;
    for (const auto& p : parameters)
      if (p.name == n) return true;
    return false;
  }
  /// Geometric then model parameter names.
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const auto& p : geometry.parameters) out.push_back(p.name);
    for (const auto& p : parameters) out.push_back(p.name);
    return out;
  }
  std::pair<double, double> parameter_range(const std::string& n) const {
    for (const auto& p : geometry.parameters)
      if (p.name == n) return {p.lower, p.upper};
    for (const auto& p : parameters)
      if (p.name == n) return {p.lower, p.upper};
    throw SchemaError("reference '" + name + "' has no parameter '" + n + "'");
  }

  /// Modes: geometric parameters, model parameters, then R coefficients per slot.
  ParametricSpace space(const InterfaceBasis& basis) const {
    ParametricSpace s;
    for (const auto& p : geometry.parameters) {
      s.labels.push_back(p.name);
      s.grids.push_back(uniform_grid(p.lower, p.upper, grid_points));
    }
    for (const auto& p : parameters) {
      s.labels.push_back(p.name);
      s.grids.push_back(p.geometric_spacing ? geometric_grid(p.lower, p.upper, grid_points) : uniform_grid(p.lower, p.upper, grid_points));
    }
    for (const auto& sl : slots)
      for (std::size_t j = 0; j < basis.size; ++j) {
        s.labels.push_back(sl.label(j));
        s.grids.push_back(uniform_grid(sl.lower, sl.upper, grid_points));
      }
    return s;
  }

  void validate(const InterfaceBasis& basis) const {
    if (name.empty()) throw SchemaError("reference problem without a name");
    if (n1 < 2 || n2 < 2) throw SchemaError("reference '" + name + "' needs at least 2 nodes per direction");
    if (quadrature < 1 || quadrature > 4) throw SchemaError("quadrature order must be in 1..4");
    if (grid_points < 2) throw SchemaError("parameter grids need at least 2 points");
    geometry.validate();
    if (physics == Physics::plate) rectangle_dimensions(geometry);
    bool held = !dirichlet.empty();
    for (const auto& s : slots) held = held || s.kind == SlotKind::dirichlet;
    if (!held) throw SchemaError("reference '" + name + "' has no Dirichlet edge");
    std::set<std::string> labels;
    for (const auto& l : space(basis).labels)
      if (!labels.insert(l).second) throw SchemaError("duplicate mode label '" + l + "' in reference '" + name + "'");
    for (const auto& s : slots) {
      if (s.component < 0 || s.component >= dofs_per_node()) throw SchemaError("slot '" + s.name + "' has an invalid component");
      if (!(s.lower < s.upper)) throw SchemaError("slot '" + s.name + "' has an empty range");
    }
    for (const auto& p : parameters)
      if (!(p.lower < p.upper) || (p.geometric_spacing && p.lower <= 0.0)) throw SchemaError("parameter '" + p.name + "' has an invalid range");
  }

  /// Grid-node count per direction of a full tensor discretization: space (2) plus every mode.
  std::size_t separated_dimension(const InterfaceBasis& basis) const { return 2 + space(basis).size(); }
};

/// Mesh node indices of an edge, in increasing edge coordinate.
inline std::vector<std::size_t> edge_nodes(const ReferenceProblem& r, Edge e) { return r.mesh().edge_nodes(e); }

/// Value of a reference parameter: a global parameter name or a constant.
struct ParameterSource {
  std::string global;
  double constant = 0.0;
  bool is_constant() const { return global.empty(); }
};

struct ModuleSpec {
  std::string name;
  std::string reference;
  double angle = 0.0;
  bool reflect = false;
  AffineVec2 translation;                              // affine in global parameters
  std::map<std::string, ParameterSource> parameters;   // reference parameter -> source
  std::map<std::string, std::vector<std::string>> loads;  // slot -> R global coefficient names
};

struct InterfaceSide {
  std::string module;
  std::vector<std::string> slots;
};

struct InterfaceSpec {
  std::string name;
  InterfaceSide l, m;
  bool reversed = false;  // side m runs against the interface orientation
};

struct GlobalParameter {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
};

struct ProblemDefinition {
  std::string name;
  InterfaceBasis basis;
  PgdSettings pgd;
  std::vector<GlobalParameter> parameters;
  std::vector<ReferenceProblem> references;
  std::vector<ModuleSpec> modules;
  std::vector<InterfaceSpec> interfaces;
  std::vector<std::vector<std::string>> constraints;  // groups of "module.parameter" that must coincide

  std::size_t reference_index(const std::string& n) const {
    for (std::size_t i = 0; i < references.size(); ++i)
      if (references[i].name == n) return i;
    throw SchemaError("unknown reference problem '" + n + "'");
  }
  std::size_t module_index(const std::string& n) const {
    for (std::size_t i = 0; i < modules.size(); ++i)
      if (modules[i].name == n) return i;
    throw SchemaError("unknown module '" + n + "'");
  }
  const ReferenceProblem& reference_of(std::size_t module) const { return references[reference_index(modules[module].reference)]; }
  const GlobalParameter& parameter(const std::string& n) const {
    for (const auto& p : parameters)
      if (p.name == n) return p;
    throw SchemaError("unknown global parameter '" + n + "'");
  }
  /// Size of interface s's coefficient block.
  std::size_t block_size(std::size_t s) const { return basis.size * interfaces[s].l.slots.size(); }
  std::size_t block_offset(std::size_t s) const {
    std::size_t o = 0;
    for (std::size_t i = 0; i < s; ++i) o += block_size(i);
    return o;
  }
  std::size_t skeleton_size() const { return block_offset(interfaces.size()); }

  /// Range of skeleton entry k (taken from the slot on side l).
  std::pair<double, double> skeleton_range(std::size_t k) const {
    for (std::size_t s = 0; s < interfaces.size(); ++s) {
      const std::size_t o = block_offset(s);
      if (k < o + block_size(s)) {
        const auto& side = interfaces[s].l;
        const auto& slot = reference_of(module_index(side.module)).slot(side.slots[(k - o) / basis.size]);
        return {slot.lower, slot.upper};
      }
    }
    throw SchemaError("skeleton index out of range");
  }

  void validate() const {
    basis.validate();
    pgd.validate();
    if (modules.empty()) throw SchemaError("problem '" + name + "' has no modules");
    if (references.empty()) throw SchemaError("problem '" + name + "' has no reference problems");
    std::set<std::string> names;
    for (const auto& p : parameters) {
      if (!names.insert(p.name).second) throw SchemaError("duplicate global parameter '" + p.name + "'");
      if (!(p.lower <= p.upper)) throw SchemaError("global parameter '" + p.name + "' has an empty range");
    }
    for (const auto& r : references) r.validate(basis);
    std::set<std::string> module_names;
    for (const auto& m : modules) {
      if (!module_names.insert(m.name).second) throw SchemaError("duplicate module '" + m.name + "'");
      const auto& ref = references[reference_index(m.reference)];
      for (const auto& n : ref.parameter_names()) {
        auto it = m.parameters.find(n);
        if (it == m.parameters.end()) throw SchemaError("module '" + m.name + "' does not bind parameter '" + n + "'");
        if (!it->second.is_constant()) parameter(it->second.global);
      }
      for (const auto& [n, src] : m.parameters)
        if (!ref.has_parameter(n)) throw SchemaError("module '" + m.name + "' binds unknown parameter '" + n + "'");
      for (const auto& [slot, coeffs] : m.loads) {
        if (ref.slot(slot).kind != SlotKind::neumann) throw SchemaError("load on slot '" + slot + "' of module '" + m.name + "' must be neumann");
        if (coeffs.size() != basis.size) throw SchemaError("load on slot '" + slot + "' needs " + std::to_string(basis.size) + " coefficients");
        for (const auto& c : coeffs) parameter(c);
      }
      for (const auto& [name, v] : m.translation.terms) parameter(name);
      // Rotations are not pushed through the rotation unknowns.
      if (ref.physics == Physics::plate && (m.angle != 0.0 || m.reflect)) throw SchemaError("plate module '" + m.name + "' may only be translated");
    }
    std::set<std::pair<std::string, std::string>> used;
    for (const auto& i : interfaces) {
      if (i.l.module == i.m.module) throw SchemaError("interface '" + i.name + "' must join two different modules");
      if (i.l.slots.empty() || i.l.slots.size() != i.m.slots.size())
        throw SchemaError("interface '" + i.name + "' needs the same non-zero slot count on both sides");
      for (const auto* side : {&i.l, &i.m}) {
        const auto& mod = modules[module_index(side->module)];
        const auto& ref = references[reference_index(mod.reference)];
        const Edge e = ref.slot(side->slots.front()).edge;
        for (const auto& s : side->slots) {
          if (ref.slot(s).edge != e) throw SchemaError("interface '" + i.name + "' mixes edges of module '" + side->module + "'");
          if (mod.loads.count(s)) throw SchemaError("slot '" + s + "' of module '" + side->module + "' is both loaded and coupled");
          if (!used.insert({side->module, s}).second) throw SchemaError("slot '" + s + "' of module '" + side->module + "' is coupled twice");
        }
      }
      for (std::size_t k = 0; k < i.l.slots.size(); ++k) {
        const auto& a = reference_of(module_index(i.l.module)).slot(i.l.slots[k]);
        const auto& b = reference_of(module_index(i.m.module)).slot(i.m.slots[k]);
        if (a.kind != b.kind || a.component != b.component)
          throw SchemaError("interface '" + i.name + "' pairs slots of different kind or component");
      }
      const auto& rl = reference_of(module_index(i.l.module));
      const auto& rm = reference_of(module_index(i.m.module));
      if (rl.physics != rm.physics) throw SchemaError("interface '" + i.name + "' joins different physics");
      const auto nl = edge_nodes(rl, rl.slot(i.l.slots.front()).edge).size();
      const auto nm = edge_nodes(rm, rm.slot(i.m.slots.front()).edge).size();
      if (nl != nm) throw SchemaError("interface '" + i.name + "' is not conforming: " + std::to_string(nl) + " vs " + std::to_string(nm) + " nodes");
    }
    for (const auto& group : constraints)
      for (const auto& ref : group) {
        const auto dot = ref.find('.');
        if (dot == std::string::npos) throw SchemaError("constraint entry '" + ref + "' must read module.parameter");
        const auto& mod = modules[module_index(ref.substr(0, dot))];
        if (!references[reference_index(mod.reference)].has_parameter(ref.substr(dot + 1)))
          throw SchemaError("constraint entry '" + ref + "' names an unknown parameter");
      }
  }

  /// Interface coupling kind (all interfaces share one kind).
  std::optional<SlotKind> coupling_kind() const {
    std::optional<SlotKind> k;
    for (const auto& i : interfaces) {
      const auto kind = reference_of(module_index(i.l.module)).slot(i.l.slots.front()).kind;
      if (k && *k != kind) throw SchemaError("interfaces mix neumann and dirichlet coupling");
      k = kind;
    }
    return k;
  }
};

// ---------------------------------------------------------------------------
// Global parameter values and their use by placed modules.

/// Checks that every global parameter is given and inside its range.
inline void check_global_parameters(const ProblemDefinition& def, const Bindings& values) {
  for (const auto& p : def.parameters) {
    auto it = values.find(p.name);
    if (it == values.end()) throw SchemaError("missing value for parameter '" + p.name + "'");
    const double slack = 1e-12 * std::max(1.0, std::abs(p.upper - p.lower));
    if (!std::isfinite(it->second) || it->second < p.lower - slack || it->second > p.upper + slack)
      throw RangeError("parameter '" + p.name + "' = " + std::to_string(it->second) + " outside [" + std::to_string(p.lower) + ", " +
                       std::to_string(p.upper) + "]");
  }
  for (const auto& [name, v] : values) def.parameter(name);
}

struct PlacedModule {
  std::string name;
  std::size_t reference = 0;
  Bindings parameters;  // reference parameter values (geometric and model)
  Placement placement;
};

/// Modules placed at given global parameters. `overrides` may set individual
/// module parameters ("module.parameter"); geometric constraints are checked afterwards.
inline std::vector<PlacedModule> place_modules(const ProblemDefinition& def, const Bindings& globals, const Bindings& overrides = {}) {
  check_global_parameters(def, globals);
  std::vector<PlacedModule> out;
  for (const auto& m : def.modules) {
    PlacedModule pm;
    pm.name = m.name;
    pm.reference = def.reference_index(m.reference);
    for (const auto& [n, src] : m.parameters) pm.parameters[n] = src.is_constant() ? src.constant : globals.at(src.global);
    pm.placement = Placement{m.angle, m.translation.eval(globals), m.reflect};
    out.push_back(std::move(pm));
  }
  for (const auto& [key, v] : overrides) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) throw SchemaError("module override '" + key + "' must read module.parameter");
    auto& pm = out[def.module_index(key.substr(0, dot))];
    const auto n = key.substr(dot + 1);
    if (!def.references[pm.reference].has_parameter(n)) throw SchemaError("module override '" + key + "' names an unknown parameter");
    pm.parameters[n] = v;
  }
  for (const auto& pm : out) {
    const auto& ref = def.references[pm.reference];
    for (const auto& n : ref.parameter_names()) {
      const auto [lo, hi] = ref.parameter_range(n);
      const double v = pm.parameters.at(n);
      if (v < lo - 1e-12 * std::max(1.0, hi - lo) || v > hi + 1e-12 * std::max(1.0, hi - lo))
        throw RangeError("module '" + pm.name + "' parameter '" + n + "' = " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]");
    }
  }
  for (const auto& group : def.constraints) {
    std::optional<double> first;
    for (const auto& key : group) {
      const auto dot = key.find('.');
      const double v = out[def.module_index(key.substr(0, dot))].parameters.at(key.substr(dot + 1));
      if (first && std::abs(v - *first) > 1e-12 * std::max(1.0, std::abs(*first)))
        throw SchemaError("geometric constraint violated: " + key + " = " + std::to_string(v) + " differs from " + std::to_string(*first));
      if (!first) first = v;
    }
  }
  return out;
}

/// Physical coordinates of every mesh node of a placed module.
inline std::vector<Vec2> node_positions(const ReferenceProblem& ref, const PlacedModule& pm) {
  const auto mesh = ref.mesh();
  const auto net = ref.geometry.control_net(pm.parameters);
  std::vector<Vec2> out(mesh.node_count());
  for (std::size_t n = 0; n < mesh.node_count(); ++n) out[n] = place(evaluate_patch(ref.geometry.patch, net, mesh.xi(n)).point, pm.placement);
  return out;
}

/// Mesh nodes of one interface side, ordered along the interface orientation.
inline std::vector<std::size_t> trace_nodes(const ProblemDefinition& def, std::size_t s, bool side_m) {
  const auto& i = def.interfaces[s];
  const auto& side = side_m ? i.m : i.l;
  const auto& ref = def.reference_of(def.module_index(side.module));
  auto nodes = edge_nodes(ref, ref.slot(side.slots.front()).edge);
  if (side_m && i.reversed) std::reverse(nodes.begin(), nodes.end());
  return nodes;
}

/// Largest distance between paired trace nodes over all interfaces.
inline double conformity_gap(const ProblemDefinition& def, const std::vector<PlacedModule>& placed) {
  double gap = 0.0;
  for (std::size_t s = 0; s < def.interfaces.size(); ++s) {
    const auto li = def.module_index(def.interfaces[s].l.module), mi = def.module_index(def.interfaces[s].m.module);
    const auto xl = node_positions(def.references[placed[li].reference], placed[li]);
    const auto xm = node_positions(def.references[placed[mi].reference], placed[mi]);
    const auto nl = trace_nodes(def, s, false), nm = trace_nodes(def, s, true);
    for (std::size_t k = 0; k < nl.size(); ++k) gap = std::max(gap, (xl[nl[k]] - xm[nm[k]]).norm());
  }
  return gap;
}

inline void check_conformity(const ProblemDefinition& def, const std::vector<PlacedModule>& placed, double tol = 1e-9) {
  const double gap = conformity_gap(def, placed);
  if (gap > tol) throw GeometryError("interface meshes do not coincide: gap " + std::to_string(gap));
}

// ---------------------------------------------------------------------------
// Offline model of one reference problem.

struct ReferenceModel {
  SeparatedOperator op;
  std::vector<LoadTerm> loads;
  std::vector<FieldTerm> lifting;
};

/// Values psi_j(t) at the nodes of an edge (t = edge coordinate in [0, 1]).
inline Eigen::MatrixXd edge_basis_values(const ReferenceProblem& ref, Edge e, const InterfaceBasis& basis) {
  const auto nodes = edge_nodes(ref, e);
  Eigen::MatrixXd v(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(basis.size));
  for (std::size_t k = 0; k < nodes.size(); ++k)
    v.row(static_cast<Eigen::Index>(k)) = basis.values_at(static_cast<double>(k) / static_cast<double>(nodes.size() - 1)).transpose();
  return v;
}

inline ReferenceModel build_reference_model(const ReferenceProblem& ref, const InterfaceBasis& basis) {
  ref.validate(basis);
  const auto mesh = ref.mesh();
  const auto space = ref.space(basis);
  const int dpn = ref.dofs_per_node();
  ReferenceModel out;
  if (ref.physics == Physics::diffusion) {
    DiffusionOptions opt;
    opt.conductivity = ref.conductivity;
    opt.quadrature = ref.quadrature;
    opt.compression_tol = ref.compression_tol;
    out.op = assemble_diffusion(mesh, ref.geometry, space, opt);
  } else {
    out.op = assemble_plate(mesh, ref.geometry, space);
  }

  std::vector<char> fixed(ref.dofs(), 0);
  Eigen::VectorXd fixed_values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ref.dofs()));
  for (const auto& d : ref.dirichlet)
    for (auto n : mesh.edge_nodes(d.edge))
      for (int c = 0; c < dpn; ++c) {
        const auto dof = n * static_cast<std::size_t>(dpn) + static_cast<std::size_t>(c);
        fixed[dof] = 1;
        fixed_values(static_cast<Eigen::Index>(dof)) = d.value;
      }

  // Lifted loads -K_t * lift for every operator term, with the lift's own factors appended.
  auto lifted = [&](const Eigen::VectorXd& lift, const std::vector<Eigen::VectorXd>& lift_factors, const std::string& group) {
    for (const auto& t : out.op.terms) {
      LoadTerm l;
      l.vector = -(t.matrix * lift);
      l.factors = t.factors;
      for (std::size_t k = 0; k < l.factors.size(); ++k) l.factors[k] = l.factors[k].cwiseProduct(lift_factors[k]);
      l.group = group;
      if (l.vector.squaredNorm() > 0.0) out.loads.push_back(std::move(l));
    }
    out.lifting.push_back({lift, lift_factors});
  };

  if (fixed_values.squaredNorm() > 0.0) lifted(fixed_values, space.all_ones(), "dirichlet");

  for (const auto& s : ref.slots) {
    std::vector<std::string> labels;
    for (std::size_t j = 0; j < basis.size; ++j) labels.push_back(s.label(j));
    if (s.kind == SlotKind::neumann) {
      auto l = assemble_neumann_load(mesh, ref.geometry, s.edge, basis, space, labels, dpn, s.component);
      out.loads.insert(out.loads.end(), l.begin(), l.end());
      continue;
    }
    const auto nodes = mesh.edge_nodes(s.edge);
    const auto values = edge_basis_values(ref, s.edge, basis);
    for (std::size_t j = 0; j < basis.size; ++j) {
      Eigen::VectorXd lift = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ref.dofs()));
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto dof = nodes[k] * static_cast<std::size_t>(dpn) + static_cast<std::size_t>(s.component);
        if (!fixed[dof]) lift(static_cast<Eigen::Index>(dof)) = values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
      }
      auto f = space.all_ones();
      const auto m = space.index(labels[j]);
      f[m] = space.ramp(m);
      lifted(lift, f, labels[j]);
    }
    for (auto n : nodes) fixed[n * static_cast<std::size_t>(dpn) + static_cast<std::size_t>(s.component)] = 1;
  }
  for (std::size_t d = 0; d < fixed.size(); ++d)
    if (fixed[d]) out.op.dirichlet_dofs.push_back(d);
  return out;
}

/// Offline solve of one reference problem.
inline TransferFunction solve_reference(const ReferenceModel& model, const PgdSettings& settings) {
  return solve(model.op, model.loads, settings, model.lifting);
}

// ---------------------------------------------------------------------------
// Direct operators at fixed parameters. `values` binds geometric and model
// parameters and, optionally, slot coefficient labels (missing ones are zero).

inline SparseMatrix direct_stiffness(const ReferenceProblem& ref, const Bindings& values) {
  if (ref.physics == Physics::diffusion)
    return assemble_diffusion_direct(ref.mesh(), ref.geometry, values, {ref.conductivity, ref.quadrature});
  auto get = [&](const char* n) {
    auto it = values.find(n);
    if (it == values.end()) throw SchemaError(std::string("missing plate parameter '") + n + "'");
    return it->second;
  };
  return assemble_plate_direct(ref.mesh(), ref.geometry, get("h"), get("E"), get("nu"));
}

inline Eigen::VectorXd slot_coefficients(const Slot& slot, const InterfaceBasis& basis, const Bindings& values) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size));
  for (std::size_t j = 0; j < basis.size; ++j) {
    auto it = values.find(slot.label(j));
    if (it != values.end()) c(static_cast<Eigen::Index>(j)) = it->second;
  }
  return c;
}

/// Consistent nodal loads of every neumann slot profile.
inline Eigen::VectorXd direct_load(const ReferenceProblem& ref, const InterfaceBasis& basis, const Bindings& values) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ref.dofs()));
  for (const auto& s : ref.slots) {
    if (s.kind != SlotKind::neumann) continue;
    const auto c = slot_coefficients(s, basis, values);
    if (c.squaredNorm() > 0.0) f += edge_load_direct(ref.mesh(), ref.geometry, values, s.edge, basis, c, ref.dofs_per_node(), s.component);
  }
  return f;
}

struct DirichletData {
  std::vector<std::size_t> dofs;
  Eigen::VectorXd values;  // full length, meaningful on `dofs`
};

/// Fixed edges first; dirichlet slots prescribe their profile on the remaining edge nodes.
inline DirichletData direct_dirichlet(const ReferenceProblem& ref, const InterfaceBasis& basis, const Bindings& values) {
  const auto mesh = ref.mesh();
  const int dpn = ref.dofs_per_node();
  DirichletData d;
  d.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ref.dofs()));
  std::vector<char> fixed(ref.dofs(), 0);
  for (const auto& e : ref.dirichlet)
    for (auto n : mesh.edge_nodes(e.edge))
      for (int c = 0; c < dpn; ++c) {
        const auto dof = n * static_cast<std::size_t>(dpn) + static_cast<std::size_t>(c);
        fixed[dof] = 1;
        d.values(static_cast<Eigen::Index>(dof)) = e.value;
      }
  for (const auto& s : ref.slots) {
    if (s.kind != SlotKind::dirichlet) continue;
    const auto c = slot_coefficients(s, basis, values);
    const auto nodes = mesh.edge_nodes(s.edge);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto dof = nodes[k] * static_cast<std::size_t>(dpn) + static_cast<std::size_t>(s.component);
      if (fixed[dof]) continue;
      fixed[dof] = 1;
      d.values(static_cast<Eigen::Index>(dof)) = basis.values_at(static_cast<double>(k) / static_cast<double>(nodes.size() - 1)).dot(c);
    }
  }
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (fixed[i]) d.dofs.push_back(i);
  return d;
}

/// Reference-space coordinates of a placed module for given global
/// parameters and skeleton coefficients.
struct ModuleCoordinates {
  std::vector<double> base;  // with all skeleton coefficients at zero
  // Skeleton entry k contributes weight * lambda_k to mode `mode`.
  struct Link {
    std::size_t mode;
    std::size_t lambda;
    double weight;
  };
  std::vector<Link> links;

  std::vector<double> at(const Eigen::VectorXd& lambda) const {
    auto c = base;
    for (const auto& l : links) c[l.mode] += l.weight * lambda(static_cast<Eigen::Index>(l.lambda));
    return c;
  }
};

/// Coordinates of module `mi`: parameters from the placement, loads from the
/// globals, interface coefficients from the skeleton. Side l receives +alpha
/// and side m receives -alpha for neumann coupling; dirichlet coupling
/// prescribes the same trace on both sides.
inline ModuleCoordinates module_coordinates(const ProblemDefinition& def, std::size_t mi, const PlacedModule& pm, const Bindings& globals) {
  const auto& ref = def.references[pm.reference];
  const auto space = ref.space(def.basis);
  ModuleCoordinates mc;
  mc.base.assign(space.size(), 0.0);
  for (const auto& [n, v] : pm.parameters) mc.base[space.index(n)] = v;
  for (const auto& [slot, coeffs] : def.modules[mi].loads)
    for (std::size_t j = 0; j < coeffs.size(); ++j) mc.base[space.index(ref.slot(slot).label(j))] = globals.at(coeffs[j]);
  for (std::size_t s = 0; s < def.interfaces.size(); ++s) {
    const auto& i = def.interfaces[s];
    for (const bool side_m : {false, true}) {
      const auto& side = side_m ? i.m : i.l;
      if (def.module_index(side.module) != mi) continue;
      for (std::size_t k = 0; k < side.slots.size(); ++k) {
        const auto& slot = ref.slot(side.slots[k]);
        for (std::size_t j = 0; j < def.basis.size; ++j) {
          double w = (side_m && slot.kind == SlotKind::neumann) ? -1.0 : 1.0;
          if (side_m && i.reversed) w *= def.basis.parity(j);
          mc.links.push_back({space.index(slot.label(j)), def.block_offset(s) + k * def.basis.size + j, w});
        }
      }
    }
  }
  return mc;
}

// ---------------------------------------------------------------------------
// Conforming union of the placed module meshes.

struct GlobalMesh {
  std::size_t node_count = 0;
  std::vector<std::vector<std::size_t>> node_map;  // module -> local node -> global node
  std::vector<Vec2> points;
  std::vector<std::array<std::size_t, 4>> cells;  // counter-clockwise quads
  std::vector<std::size_t> cell_module;
};

/// Merges paired interface nodes; physical positions are averaged over copies.
inline GlobalMesh glue(const ProblemDefinition& def, const std::vector<PlacedModule>& placed) {
  std::vector<std::size_t> offset(placed.size() + 1, 0);
  for (std::size_t m = 0; m < placed.size(); ++m) offset[m + 1] = offset[m] + def.references[placed[m].reference].mesh().node_count();
  std::vector<std::size_t> parent(offset.back());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t s = 0; s < def.interfaces.size(); ++s) {
    const auto li = def.module_index(def.interfaces[s].l.module), mi = def.module_index(def.interfaces[s].m.module);
    const auto nl = trace_nodes(def, s, false), nm = trace_nodes(def, s, true);
    for (std::size_t k = 0; k < nl.size(); ++k) {
      const auto a = find(offset[li] + nl[k]), b = find(offset[mi] + nm[k]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  GlobalMesh g;
  std::vector<std::size_t> id(parent.size(), static_cast<std::size_t>(-1));
  std::vector<int> copies;
  g.node_map.resize(placed.size());
  for (std::size_t m = 0; m < placed.size(); ++m) {
    const auto& ref = def.references[placed[m].reference];
    const auto x = node_positions(ref, placed[m]);
    g.node_map[m].resize(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
      const auto root = find(offset[m] + n);
      if (id[root] == static_cast<std::size_t>(-1)) {
        id[root] = g.node_count++;
        g.points.push_back(Vec2::Zero());
        copies.push_back(0);
      }
      g.node_map[m][n] = id[root];
      g.points[id[root]] += x[n];
      ++copies[id[root]];
    }
    const auto mesh = ref.mesh();
    for (std::size_t j = 0; j + 1 < mesh.n2; ++j)
      for (std::size_t i = 0; i + 1 < mesh.n1; ++i) {
        std::array<std::size_t, 4> c{mesh.node(i, j), mesh.node(i + 1, j), mesh.node(i + 1, j + 1), mesh.node(i, j + 1)};
        const Vec2 d1 = x[c[2]] - x[c[0]], d2 = x[c[3]] - x[c[1]];
        if (d1.x() * d2.y() - d1.y() * d2.x() < 0.0) std::swap(c[1], c[3]);
        for (auto& n : c) n = g.node_map[m][n];
        g.cells.push_back(c);
        g.cell_module.push_back(m);
      }
  }
  for (std::size_t n = 0; n < g.node_count; ++n) g.points[n] /= copies[n];
  return g;
}

// ---------------------------------------------------------------------------
// Bundled example problems.

namespace problems {

inline ModuleSpec module(const std::string& name, const std::string& reference, std::map<std::string, ParameterSource> params) {
  ModuleSpec m;
  m.name = name;
  m.reference = reference;
  m.parameters = std::move(params);
  return m;
}

/// Curved-corner L-shape: two straight channel modules sharing one reference
/// problem and a quarter-annulus corner. Global parameters p1..p6 (lengths) and
/// beta1..beta6 (inlet and outlet flux coefficients).
inline ProblemDefinition lshape(std::size_t mesh = 21, std::size_t grid = 11) {
  ProblemDefinition def;
  def.name = "lshape";
  // At 1e-4 the channel's slot groups stall at max_rank with indicators near 3e-4.
  def.pgd.stop_ratio = 1e-3;
  for (int i = 1; i <= 6; ++i) def.parameters.push_back({"p" + std::to_string(i), 1.0, 3.0});
  for (int i = 1; i <= 6; ++i) def.parameters.push_back({"beta" + std::to_string(i), -100.0, 100.0});

  ReferenceProblem channel;
  channel.name = "channel";
  channel.n1 = channel.n2 = mesh;
  channel.grid_points = grid;
  channel.geometry = patches::tapered_channel("w_out", "length", "w_in", {1.0, 3.0});
  channel.dirichlet = {{Edge::bottom, 0.0}};
  // Interface fluxes concentrate where the channel narrows, so slot ranges exceed the load range.
  channel.slots = {{"in", Edge::left, SlotKind::neumann, 0, -1000.0, 1000.0}, {"out", Edge::right, SlotKind::neumann, 0, -1000.0, 1000.0}};

  ReferenceProblem corner;
  corner.name = "corner";
  corner.n1 = corner.n2 = mesh;
  corner.grid_points = grid;
  corner.quadrature = 3;
  corner.geometry = patches::quarter_annulus("r", "w", {1.0, 3.0}, {1.0, 3.0});
  corner.dirichlet = {{Edge::left, 0.0}};
  corner.slots = {{"g1", Edge::bottom, SlotKind::neumann, 0, -1000.0, 1000.0}, {"g2", Edge::top, SlotKind::neumann, 0, -1000.0, 1000.0}};
  def.references = {channel, corner};

  auto m1 = module("Omega1", "channel", {{"w_out", {"p4"}}, {"length", {"p2"}}, {"w_in", {"p1"}}});
  m1.angle = std::numbers::pi / 2;
  m1.reflect = true;
  m1.translation.terms = {{"p3", Vec2(1, 0)}, {"p2", Vec2(0, -1)}};
  m1.loads["in"] = {"beta1", "beta2", "beta3"};
  auto m2 = module("Omega2", "corner", {{"r", {"p3"}}, {"w", {"p4"}}});
  auto m3 = module("Omega3", "channel", {{"w_in", {"p4"}}, {"length", {"p5"}}, {"w_out", {"p6"}}});
  m3.angle = std::numbers::pi;
  m3.reflect = true;
  m3.translation.terms = {{"p3", Vec2(0, 1)}};
  m3.loads["out"] = {"beta4", "beta5", "beta6"};
  def.modules = {m1, m2, m3};
  def.interfaces = {{"gamma1", {"Omega1", {"out"}}, {"Omega2", {"g1"}}, false}, {"gamma2", {"Omega2", {"g2"}}, {"Omega3", {"in"}}, false}};
  def.constraints = {{"Omega1.w_out", "Omega2.w", "Omega3.w_in"}};
  return def;
}

/// Global parameter values for the L-shape from p1..p6 and beta1..beta6.
inline Bindings lshape_parameters(const std::array<double, 6>& p, const std::array<double, 6>& beta = {}) {
  Bindings b;
  for (int i = 0; i < 6; ++i) {
    b["p" + std::to_string(i + 1)] = p[static_cast<std::size_t>(i)];
    b["beta" + std::to_string(i + 1)] = beta[static_cast<std::size_t>(i)];
  }
  return b;
}

/// Two rectangular plate modules clamped along y = 0, transverse line loads on
/// the outer vertical edges and a shared vertical interface. With `moments`
/// the interface also carries bending and twisting moment profiles.
inline ProblemDefinition plate(std::size_t mesh = 21, std::size_t grid = 11, bool moments = true, double a1 = 0.3, double a2 = 0.2,
                               double height = 0.2) {
  ProblemDefinition def;
  def.name = "plate";
  for (int i = 1; i <= 2; ++i) {
    const auto s = std::to_string(i);
    def.parameters.push_back({"h" + s, 0.001, 0.01});
    def.parameters.push_back({"E" + s, 100e9, 300e9});
    def.parameters.push_back({"nu" + s, 0.2, 0.4});
  }
  for (int i = 1; i <= 6; ++i) def.parameters.push_back({"beta" + std::to_string(i), -1e4, 1e4});

  auto make = [&](const std::string& name, double a) {
    ReferenceProblem r;
    r.name = name;
    r.physics = Physics::plate;
    r.n1 = r.n2 = mesh;
    r.grid_points = grid;
    r.geometry = patches::rectangle(a, height);
    r.parameters = {{"h", 0.001, 0.01, true}, {"E", 100e9, 300e9, false}, {"nu", 0.2, 0.4, false}};
    r.dirichlet = {{Edge::bottom, 0.0}};
    r.slots = {{"in", Edge::left, SlotKind::neumann, 0, -1e5, 1e5}, {"out", Edge::right, SlotKind::neumann, 0, -1e5, 1e5}};
    if (moments) {
      // Bending moment pairs with theta_y on x-normal edges, twisting moment with theta_x.
      r.slots.push_back({"out_m", Edge::right, SlotKind::neumann, 2, -1e4, 1e4});
      r.slots.push_back({"out_t", Edge::right, SlotKind::neumann, 1, -1e4, 1e4});
      r.slots.push_back({"in_m", Edge::left, SlotKind::neumann, 2, -1e4, 1e4});
      r.slots.push_back({"in_t", Edge::left, SlotKind::neumann, 1, -1e4, 1e4});
    }
    return r;
  };
  def.references = {make("plate_a", a1), make("plate_b", a2)};
  auto m1 = module("Plate1", "plate_a", {{"h", {"h1"}}, {"E", {"E1"}}, {"nu", {"nu1"}}});
  m1.loads["in"] = {"beta1", "beta2", "beta3"};
  auto m2 = module("Plate2", "plate_b", {{"h", {"h2"}}, {"E", {"E2"}}, {"nu", {"nu2"}}});
  m2.translation.constant = Vec2(a1, 0.0);
  m2.loads["out"] = {"beta4", "beta5", "beta6"};
  def.modules = {m1, m2};
  InterfaceSpec g{"gamma1", {"Plate1", {"out"}}, {"Plate2", {"in"}}, false};
  if (moments) {
    g.l.slots = {"out", "out_m", "out_t"};
    g.m.slots = {"in", "in_m", "in_t"};
  }
  def.interfaces = {g};
  return def;
}

/// Parameter values of the two-plate snapshot (thickness, modulus, Poisson
/// ratio per module and the outer edge load coefficients).
inline Bindings plate_snapshot() {
  return {{"h1", 0.01}, {"E1", 100e9}, {"nu1", 0.3}, {"h2", 0.01}, {"E2", 200e9}, {"nu2", 0.3}, {"beta1", 7e3}, {"beta2", 7e3},
          {"beta3", 7e3}, {"beta4", 0.0}, {"beta5", -7e3}, {"beta6", -7e3}};
}

/// Straight chain of `count` rectangular heat-conduction modules along x,
/// each held at zero on y = 0, with load coefficients q1..q3 at the left end
/// and q4..q6 at the right end.
inline ProblemDefinition chain(std::size_t count, std::size_t mesh = 9, std::size_t grid = 5) {
  ProblemDefinition def;
  def.name = "chain";
  for (int i = 1; i <= 6; ++i) def.parameters.push_back({"q" + std::to_string(i), -100.0, 100.0});
  ReferenceProblem bar;
  bar.name = "bar";
  bar.n1 = bar.n2 = mesh;
  bar.grid_points = grid;
  bar.geometry = patches::rectangle(1.0, 1.0);
  bar.dirichlet = {{Edge::bottom, 0.0}};
  bar.slots = {{"in", Edge::left, SlotKind::neumann, 0, -400.0, 400.0}, {"out", Edge::right, SlotKind::neumann, 0, -400.0, 400.0}};
  def.references = {bar};
  for (std::size_t i = 0; i < count; ++i) {
    auto m = module("M" + std::to_string(i + 1), "bar", {});
    m.translation.constant = Vec2(static_cast<double>(i), 0.0);
    if (i == 0) m.loads["in"] = {"q1", "q2", "q3"};
    if (i + 1 == count) m.loads["out"] = {"q4", "q5", "q6"};
    def.modules.push_back(m);
    if (i > 0) def.interfaces.push_back({"g" + std::to_string(i), {"M" + std::to_string(i), {"out"}}, {m.name, {"in"}}, false});
  }
  return def;
}

/// Two collinear rods [0,1] x [0,w] and [1,2] x [0,w] coupled through a
/// prescribed interface trace: flux q1..q3 enters at x = 0, x = 2 is held at zero.
inline ProblemDefinition rod(std::size_t mesh = 11, std::size_t grid = 5, double width = 0.25) {
  ProblemDefinition def;
  def.name = "rod";
  for (int i = 1; i <= 3; ++i) def.parameters.push_back({"q" + std::to_string(i), -100.0, 100.0});
  ReferenceProblem a;
  a.name = "rod_a";
  a.n1 = mesh;
  a.n2 = 3;
  a.grid_points = grid;
  a.geometry = patches::rectangle(1.0, width);
  // The right edge is prescribed through the interface slot; nothing else is fixed.
  a.dirichlet = {};
  a.slots = {{"in", Edge::left, SlotKind::neumann, 0, -100.0, 100.0}, {"out", Edge::right, SlotKind::dirichlet, 0, -200.0, 200.0}};
  ReferenceProblem b = a;
  b.name = "rod_b";
  b.dirichlet = {{Edge::right, 0.0}};
  b.slots = {{"in", Edge::left, SlotKind::dirichlet, 0, -200.0, 200.0}};
  def.references = {a, b};
  auto ma = module("RodA", "rod_a", {});
  ma.loads["in"] = {"q1", "q2", "q3"};
  auto mb = module("RodB", "rod_b", {});
  mb.translation.constant = Vec2(1.0, 0.0);
  def.modules = {ma, mb};
  def.interfaces = {{"gamma", {"RodA", {"out"}}, {"RodB", {"in"}}, false}};
  return def;
}

}  // namespace problems
}  // namespace mpgd
