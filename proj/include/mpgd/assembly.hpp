#pragma once

// Online stage: equilibrium of the interface coefficients by Newton iterations
// on module surrogates, global field stitching and the vademecum regression.

#include <Eigen/Dense>

#include <chrono>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mpgd/catalog.hpp"
#include "mpgd/interface.hpp"
#include "mpgd/model.hpp"

namespace mpgd {

enum class CouplingMode { jump, flux };

inline std::string to_string(CouplingMode m) { return m == CouplingMode::jump ? "jump" : "flux"; }
inline CouplingMode coupling_mode_from_string(const std::string& s) {
  if (s == "jump") return CouplingMode::jump;
  if (s == "flux") return CouplingMode::flux;
  throw SchemaError("unknown coupling mode '" + s + "' (expected jump or flux)");
}

/// Module solution as a function of its reference-space coordinates.
struct Surrogate {
  std::function<Eigen::VectorXd(std::span<const double>)> value;
  std::function<Eigen::VectorXd(std::span<const double>, std::size_t)> derivative;  // d / d coordinate
};

/// Surrogate backed by a transfer function; `field` must outlive it.
inline Surrogate pgd_surrogate(const SeparatedField& field) {
  const SeparatedField* f = &field;
  return {[f](std::span<const double> c) { return evaluate_spatial(*f, c); },
          [f](std::span<const double> c, std::size_t m) { return derivative_spatial(*f, c, m + 1); }};
}

/// Block view of d(defect_i) / d(alpha_j).
struct BlockJacobian {
  Eigen::MatrixXd matrix;
  std::vector<Eigen::Index> row_offsets, col_offsets;  // per interface, plus the end

  std::size_t blocks() const { return row_offsets.empty() ? 0 : row_offsets.size() - 1; }
  Eigen::MatrixXd block(std::size_t i, std::size_t j) const {
    return matrix.block(row_offsets[i], col_offsets[j], row_offsets[i + 1] - row_offsets[i], col_offsets[j + 1] - col_offsets[j]);
  }
  bool zero_block(std::size_t i, std::size_t j) const { return block(i, j).cwiseAbs().maxCoeff() == 0.0; }
};

/// Interface coefficients that every neighbouring pair shares (lambda) plus
/// the per-module machinery to evaluate defects and their derivatives.
class OnlineProblem {
 public:
  OnlineProblem(const ProblemDefinition& def, std::vector<Surrogate> surrogates, const Bindings& globals, CouplingMode mode,
                const Bindings& overrides = {})
      : def_(&def), surrogates_(std::move(surrogates)), mode_(mode) {
    if (surrogates_.size() != def.modules.size()) throw SchemaError("one surrogate per module is required");
    const auto kind = def.coupling_kind();
    if (kind && mode == CouplingMode::jump && *kind != SlotKind::neumann) throw SchemaError("jump coupling needs neumann interface slots");
    if (kind && mode == CouplingMode::flux && *kind != SlotKind::dirichlet) throw SchemaError("flux coupling needs dirichlet interface slots");
    placed_ = place_modules(def, globals, overrides);
    check_conformity(def, placed_);
    for (std::size_t s = 0; s < def.interfaces.size(); ++s) {
      Side l{def.module_index(def.interfaces[s].l.module), trace_nodes(def, s, false), {}, 1.0};
      Side m{def.module_index(def.interfaces[s].m.module), trace_nodes(def, s, true), {}, 1.0};
      sides_.push_back({l, m});
    }
    offsets_.push_back(0);
    for (std::size_t s = 0; s < def.interfaces.size(); ++s) {
      const auto dpn = def.reference_of(sides_[s][0].module).dofs_per_node();
      const auto n = mode == CouplingMode::jump ? static_cast<Eigen::Index>(sides_[s][0].nodes.size()) * dpn
                                                : static_cast<Eigen::Index>(def.block_size(s));
      offsets_.push_back(offsets_.back() + n);
    }
    if (mode == CouplingMode::flux) prepare_flux();
    set_loads(globals);
  }

  /// Same placement, new load coefficients.
  void set_loads(const Bindings& globals) {
    check_global_parameters(*def_, globals);
    coords_.clear();
    for (std::size_t m = 0; m < placed_.size(); ++m) coords_.push_back(module_coordinates(*def_, m, placed_[m], globals));
    if (mode_ == CouplingMode::flux)
      for (std::size_t m = 0; m < placed_.size(); ++m) {
        Bindings values = placed_[m].parameters;
        const auto& ref = def_->references[placed_[m].reference];
        const auto space = ref.space(def_->basis);
        for (std::size_t k = 0; k < space.size(); ++k) values[space.labels[k]] = coords_[m].base[k];
        loads_[m] = direct_load(ref, def_->basis, values);
      }
  }

  const ProblemDefinition& definition() const { return *def_; }
  CouplingMode mode() const { return mode_; }
  const std::vector<PlacedModule>& placed() const { return placed_; }
  std::size_t size() const { return def_->skeleton_size(); }
  std::size_t defect_size() const { return static_cast<std::size_t>(offsets_.back()); }
  const std::vector<Eigen::Index>& defect_offsets() const { return offsets_; }
  void set_surrogate(std::size_t module, Surrogate s) { surrogates_.at(module) = std::move(s); }

  std::vector<double> coordinates(std::size_t module, const Eigen::VectorXd& lambda) const { return coords_[module].at(check(lambda)); }

  Eigen::VectorXd module_field(std::size_t module, const Eigen::VectorXd& lambda) const {
    return surrogates_[module].value(coordinates(module, lambda));
  }
  std::vector<Eigen::VectorXd> module_fields(const Eigen::VectorXd& lambda) const {
    std::vector<Eigen::VectorXd> u;
    for (std::size_t m = 0; m < placed_.size(); ++m) u.push_back(module_field(m, lambda));
    return u;
  }

  /// Stacked interface defects: trace differences (jump) or summed inward fluxes (flux).
  Eigen::VectorXd defect(const Eigen::VectorXd& lambda) const { return defect_from(module_fields(lambda)); }

  /// Primal trace difference per interface (all components), in either mode.
  std::vector<Eigen::VectorXd> trace_jumps(const std::vector<Eigen::VectorXd>& u) const {
    std::vector<Eigen::VectorXd> out;
    for (const auto& sd : sides_) {
      const int dpn = def_->references[placed_[sd[0].module].reference].dofs_per_node();
      out.push_back(trace_all(u[sd[0].module], sd[0].nodes, dpn) - trace_all(u[sd[1].module], sd[1].nodes, dpn));
    }
    return out;
  }

  /// d defect / d lambda, analytic through the surrogates' parametric slopes or by
  /// central differences with step 1e-3 times each coefficient's range.
  BlockJacobian jacobian_blocks(const Eigen::VectorXd& lambda, bool finite_difference = false) const {
    check(lambda);
    BlockJacobian j;
    j.row_offsets = offsets_;
    for (std::size_t s = 0; s <= def_->interfaces.size(); ++s) j.col_offsets.push_back(static_cast<Eigen::Index>(def_->block_offset(s)));
    j.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(defect_size()), static_cast<Eigen::Index>(size()));
    if (finite_difference) {
      for (std::size_t k = 0; k < size(); ++k) {
        const auto [lo, hi] = def_->skeleton_range(k);
        const double h = 1e-3 * (hi - lo);
        Eigen::VectorXd a = lambda, b = lambda;
        const auto kk = static_cast<Eigen::Index>(k);
        a(kk) = std::min(hi, lambda(kk) + h);
        b(kk) = std::max(lo, lambda(kk) - h);
        j.matrix.col(kk) = (defect(a) - defect(b)) / (a(kk) - b(kk));
      }
      return j;
    }
    for (std::size_t m = 0; m < placed_.size(); ++m) {
      const auto c = coords_[m].at(lambda);
      std::map<std::size_t, Eigen::VectorXd> slopes;
      for (const auto& link : coords_[m].links) {
        auto it = slopes.find(link.mode);
        if (it == slopes.end()) it = slopes.emplace(link.mode, surrogates_[m].derivative(c, link.mode)).first;
        j.matrix.col(static_cast<Eigen::Index>(link.lambda)) += link.weight * module_defect(m, it->second, false);
      }
    }
    return j;
  }

  /// Jump mode: gradient of 1/2 |defect|^2. Flux mode: the flux balance itself.
  Eigen::VectorXd residual(const Eigen::VectorXd& lambda) const {
    const auto d = defect(lambda);
    if (mode_ == CouplingMode::flux) return d;
    return jacobian_blocks(lambda).matrix.transpose() * d;
  }

  Eigen::VectorXd clamp(Eigen::VectorXd lambda) const {
    for (std::size_t k = 0; k < size(); ++k) {
      const auto [lo, hi] = def_->skeleton_range(k);
      lambda(static_cast<Eigen::Index>(k)) = std::clamp(lambda(static_cast<Eigen::Index>(k)), lo, hi);
    }
    return lambda;
  }

  Eigen::VectorXd defect_from(const std::vector<Eigen::VectorXd>& u) const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(defect_size()));
    for (std::size_t m = 0; m < u.size(); ++m) d += module_defect(m, u[m], true);
    return d;
  }

 private:
  struct Side {
    std::size_t module;
    std::vector<std::size_t> nodes;
    std::vector<FluxExtractor> extractors;  // one per slot (flux mode)
    double sign;
  };

  const Eigen::VectorXd& check(const Eigen::VectorXd& lambda) const {
    if (static_cast<std::size_t>(lambda.size()) != size())
      throw SchemaError("skeleton vector has " + std::to_string(lambda.size()) + " entries, expected " + std::to_string(size()));
    return lambda;
  }

  void prepare_flux() {
    stiffness_.resize(placed_.size());
    loads_.resize(placed_.size());
    for (std::size_t m = 0; m < placed_.size(); ++m) stiffness_[m] = direct_stiffness(def_->references[placed_[m].reference], placed_[m].parameters);
    for (std::size_t s = 0; s < sides_.size(); ++s) {
      const auto& spec = def_->interfaces[s];
      for (int k = 0; k < 2; ++k) {
        auto& side = sides_[s][static_cast<std::size_t>(k)];
        const auto& names = k == 0 ? spec.l.slots : spec.m.slots;
        const auto& ref = def_->references[placed_[side.module].reference];
        for (const auto& n : names) {
          const auto& slot = ref.slot(n);
          side.extractors.emplace_back(ref.mesh(), ref.geometry, placed_[side.module].parameters, slot.edge, def_->basis, ref.dofs_per_node(),
                                       slot.component);
        }
      }
    }
  }

  /// Contribution of module m's field (affine part only if `affine`) to the stacked defect.
  Eigen::VectorXd module_defect(std::size_t m, const Eigen::VectorXd& u, bool affine) const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(defect_size()));
    const auto& ref = def_->references[placed_[m].reference];
    const int dpn = ref.dofs_per_node();
    Eigen::VectorXd r;
    if (mode_ == CouplingMode::flux) r = affine ? Eigen::VectorXd(stiffness_[m] * u - loads_[m]) : Eigen::VectorXd(stiffness_[m] * u);
    for (std::size_t s = 0; s < sides_.size(); ++s)
      for (int k = 0; k < 2; ++k) {
        const auto& side = sides_[s][static_cast<std::size_t>(k)];
        if (side.module != m) continue;
        auto seg = d.segment(offsets_[s], offsets_[s + 1] - offsets_[s]);
        if (mode_ == CouplingMode::jump) {
          seg += (k == 0 ? 1.0 : -1.0) * trace_all(u, side.nodes, dpn);
          continue;
        }
        const bool flip = k == 1 && def_->interfaces[s].reversed;
        const auto r_sz = static_cast<Eigen::Index>(def_->basis.size);
        for (std::size_t e = 0; e < side.extractors.size(); ++e) {
          Eigen::VectorXd c = side.extractors[e].extract(r);
          if (flip)
            for (Eigen::Index j = 0; j < r_sz; ++j) c(j) *= def_->basis.parity(static_cast<std::size_t>(j));
          seg.segment(static_cast<Eigen::Index>(e) * r_sz, r_sz) += c;
        }
      }
    return d;
  }

  const ProblemDefinition* def_;
  std::vector<Surrogate> surrogates_;
  CouplingMode mode_;
  std::vector<PlacedModule> placed_;
  std::vector<ModuleCoordinates> coords_;
  std::vector<std::array<Side, 2>> sides_;
  std::vector<Eigen::Index> offsets_;
  std::vector<SparseMatrix> stiffness_;
  std::vector<Eigen::VectorXd> loads_;
};

inline std::vector<Surrogate> pgd_surrogates(const Catalog& cat) {
  std::vector<Surrogate> s;
  for (std::size_t m = 0; m < cat.problem.modules.size(); ++m) s.push_back(pgd_surrogate(cat.reference_of(m).tf.field));
  return s;
}

inline OnlineProblem online_problem(const Catalog& cat, const Bindings& globals, CouplingMode mode = CouplingMode::jump,
                                    const Bindings& overrides = {}) {
  return OnlineProblem(cat.problem, pgd_surrogates(cat), globals, mode, overrides);
}

struct NewtonOptions {
  double tol = 1e-9;  // on the residual norm, relative to its value at lambda = 0
  std::size_t max_iter = 10;
  bool finite_difference = false;
  double regularization = 1e-8;  // times trace / n, applied above condition 1e12
};

struct EquilibriumReport {
  Eigen::VectorXd lambda;
  std::size_t iterations = 0;
  std::vector<double> residual_norms;
  std::vector<double> jumps;      // Euclidean trace jump per interface
  std::vector<double> jump_rms;   // jumps / sqrt(trace length)
  double field_range = 0.0;       // max - min of the first field component over all modules
  double residual_scale = 0.0;
  bool converged = false;
  bool clamped = false;
  bool regularized = false;
  double seconds = 0.0;
  std::string diagnostics;

  double relative_jump() const {
    double j = 0.0;
    for (double v : jump_rms) j = std::max(j, v);
    return field_range > 0.0 ? j / field_range : j;
  }
};

/// Fills jumps and field range of a report at its lambda.
inline void measure_interfaces(const OnlineProblem& problem, EquilibriumReport& rep) {
  const auto u = problem.module_fields(rep.lambda);
  rep.jumps.clear();
  rep.jump_rms.clear();
  for (const auto& j : problem.trace_jumps(u)) {
    rep.jumps.push_back(j.norm());
    rep.jump_rms.push_back(j.size() ? j.norm() / std::sqrt(static_cast<double>(j.size())) : 0.0);
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t m = 0; m < u.size(); ++m) {
    const int dpn = problem.definition().references[problem.placed()[m].reference].dofs_per_node();
    for (Eigen::Index i = 0; i < u[m].size(); i += dpn) {
      lo = std::min(lo, u[m](i));
      hi = std::max(hi, u[m](i));
    }
  }
  rep.field_range = u.empty() ? 0.0 : hi - lo;
}

/// Gauss-Newton on 1/2 |defect|^2 (exact Newton for flux balance), with
/// iterates clamped to the coefficient ranges and step halving.
inline EquilibriumReport newton_solve(const OnlineProblem& problem, const Eigen::VectorXd& lambda0, const NewtonOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  EquilibriumReport rep;
  const auto n = static_cast<Eigen::Index>(problem.size());
  rep.lambda = problem.clamp(lambda0);
  rep.clamped = (rep.lambda - lambda0).cwiseAbs().maxCoeff() > 0.0;
  rep.residual_scale = problem.residual(Eigen::VectorXd::Zero(n)).norm();
  const double threshold = opt.tol * rep.residual_scale;
  auto merit = [&](const Eigen::VectorXd& l) { return 0.5 * problem.defect(l).squaredNorm(); };

  for (std::size_t it = 0;; ++it) {
    const Eigen::VectorXd d = problem.defect(rep.lambda);
    const Eigen::MatrixXd j = problem.jacobian_blocks(rep.lambda, opt.finite_difference).matrix;
    const Eigen::VectorXd g = j.transpose() * d;
    const double r = (problem.mode() == CouplingMode::flux ? d : g).norm();
    rep.residual_norms.push_back(r);
    if (r <= threshold || n == 0) {
      rep.converged = true;
      break;
    }
    if (it == opt.max_iter) {
      rep.diagnostics = "iteration cap " + std::to_string(opt.max_iter) + " reached with residual " + std::to_string(r);
      break;
    }
    Eigen::MatrixXd h = j.transpose() * j;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
    const double emax = es.eigenvalues().maxCoeff(), emin = es.eigenvalues().minCoeff();
    if (!(emin > 0.0) || emax / emin > 1e12) {
      h.diagonal().array() += opt.regularization * h.trace() / static_cast<double>(n);
      rep.regularized = true;
    }
    const Eigen::VectorXd step = -h.ldlt().solve(g);
    const double m0 = 0.5 * d.squaredNorm();
    bool accepted = false;
    for (double t = 1.0; t > 1e-6; t *= 0.5) {
      const Eigen::VectorXd raw = rep.lambda + t * step;
      const Eigen::VectorXd trial = problem.clamp(raw);
      if (merit(trial) <= m0) {
        rep.clamped = rep.clamped || (trial - raw).cwiseAbs().maxCoeff() > 0.0;
        rep.lambda = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rep.diagnostics = "line search failed at residual " + std::to_string(r);
      break;
    }
    ++rep.iterations;
  }
  if (rep.clamped && !rep.diagnostics.empty()) rep.diagnostics += "; iterates clamped to coefficient ranges";
  measure_interfaces(problem, rep);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Report at a given lambda without iterating (vademecum "instant" mode).
inline EquilibriumReport evaluate_equilibrium(const OnlineProblem& problem, const Eigen::VectorXd& lambda) {
  const auto start = std::chrono::steady_clock::now();
  EquilibriumReport rep;
  rep.lambda = problem.clamp(lambda);
  rep.clamped = (rep.lambda - lambda).cwiseAbs().maxCoeff() > 0.0;
  rep.residual_scale = problem.residual(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(problem.size()))).norm();
  rep.residual_norms.push_back(problem.residual(rep.lambda).norm());
  rep.converged = true;
  measure_interfaces(problem, rep);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Global nodal field over the glued mesh; values on shared interface nodes are averaged.
struct GlobalField {
  GlobalMesh mesh;
  int dofs_per_node = 1;
  Eigen::MatrixXd values;  // nodes x dofs_per_node
  std::vector<std::string> components;
};

inline std::vector<std::string> component_names(const ProblemDefinition& def) {
  if (!def.references.empty() && def.references.front().physics == Physics::plate) return {"w", "theta_x", "theta_y"};
  return {"u"};
}

inline GlobalField stitch(const ProblemDefinition& def, const std::vector<PlacedModule>& placed, const std::vector<Eigen::VectorXd>& u) {
  GlobalField g;
  g.mesh = glue(def, placed);
  g.dofs_per_node = def.references.empty() ? 1 : def.references.front().dofs_per_node();
  g.components = component_names(def);
  g.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.mesh.node_count), g.dofs_per_node);
  Eigen::VectorXd copies = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.mesh.node_count));
  for (std::size_t m = 0; m < placed.size(); ++m)
    for (std::size_t n = 0; n < g.mesh.node_map[m].size(); ++n) {
      const auto gi = static_cast<Eigen::Index>(g.mesh.node_map[m][n]);
      for (int c = 0; c < g.dofs_per_node; ++c) g.values(gi, c) += u[m](static_cast<Eigen::Index>(n) * g.dofs_per_node + c);
      copies(gi) += 1.0;
    }
  for (Eigen::Index i = 0; i < g.values.rows(); ++i) g.values.row(i) /= copies(i);
  return g;
}

inline GlobalField assemble_global(const OnlineProblem& problem, const Eigen::VectorXd& lambda) {
  return stitch(problem.definition(), problem.placed(), problem.module_fields(lambda));
}

// ---------------------------------------------------------------------------
// Vademecum.

struct VademecumOptions {
  std::size_t samples = 500;
  std::uint64_t seed = 1;
  double holdout = 0.2;  // fraction of samples kept for the error estimate
  RegressionOptions regression;
  CouplingMode mode = CouplingMode::jump;
  NewtonOptions newton;
  double warn_relative = 0.05;
};

/// Global parameters that act as load coefficients on some module.
inline std::vector<std::string> load_parameters(const ProblemDefinition& def) {
  std::vector<std::string> out;
  for (const auto& m : def.modules)
    for (const auto& [slot, names] : m.loads)
      for (const auto& n : names)
        if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
  std::vector<std::string> ordered;
  for (const auto& p : def.parameters)
    if (std::find(out.begin(), out.end(), p.name) != out.end()) ordered.push_back(p.name);
  return ordered;
}

/// Samples the design parameters by Latin hypercube, solves the equilibrium
/// for zero loads and for each unit load pattern, and fits every entry of the
/// resulting affine maps.
inline Vademecum vademecum_build(const Catalog& cat, const VademecumOptions& opt = {}) {
  const auto& def = cat.problem;
  if (opt.samples < 2) throw SchemaError("vademecum needs at least 2 samples");
  if (!(opt.holdout >= 0.0 && opt.holdout < 1.0)) throw SchemaError("holdout fraction must lie in [0, 1)");
  Vademecum v;
  v.loads = load_parameters(def);
  std::vector<double> lower, upper;
  for (const auto& p : def.parameters)
    if (std::find(v.loads.begin(), v.loads.end(), p.name) == v.loads.end()) {
      v.design.push_back(p.name);
      lower.push_back(p.lower);
      upper.push_back(p.upper);
    }
  v.skeleton_size = def.skeleton_size();
  v.samples = opt.samples;
  v.seed = opt.seed;
  const auto x = latin_hypercube(opt.samples, lower, upper, opt.seed);
  const std::size_t terms = 1 + v.loads.size();
  const auto ns = static_cast<Eigen::Index>(opt.samples);
  Eigen::MatrixXd targets(ns, static_cast<Eigen::Index>(terms * v.skeleton_size));
  const auto surrogates = pgd_surrogates(cat);

  for (Eigen::Index i = 0; i < ns; ++i) {
    Bindings g;
    for (std::size_t k = 0; k < v.design.size(); ++k) g[v.design[k]] = x(i, static_cast<Eigen::Index>(k));
    for (const auto& l : v.loads) g[l] = 0.0;
    OnlineProblem problem(def, surrogates, g, opt.mode);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(v.skeleton_size));
    const auto a0 = newton_solve(problem, zero, opt.newton).lambda;
    targets.block(i, 0, 1, a0.size()) = a0.transpose();
    for (std::size_t t = 0; t < v.loads.size(); ++t) {
      const auto& p = def.parameter(v.loads[t]);
      const double b = std::abs(p.upper) >= std::abs(p.lower) ? p.upper : p.lower;
      Bindings gl = g;
      gl[v.loads[t]] = b;
      problem.set_loads(gl);
      const auto lt = newton_solve(problem, zero, opt.newton).lambda;
      targets.block(i, static_cast<Eigen::Index>((t + 1) * v.skeleton_size), 1, lt.size()) = ((lt - a0) / b).transpose();
    }
  }

  const auto train = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(static_cast<double>(ns) * (1.0 - opt.holdout))));
  const Eigen::MatrixXd xt = x.topRows(train);
  for (Eigen::Index c = 0; c < targets.cols(); ++c) v.fits.push_back(fit_separated(xt, targets.col(c).head(train), lower, upper, opt.regression));
  double err = 0.0, ref = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = train; i < ns; ++i) {
    std::vector<double> xi(x.cols());
    for (Eigen::Index k = 0; k < x.cols(); ++k) xi[static_cast<std::size_t>(k)] = x(i, k);
    for (Eigen::Index c = 0; c < targets.cols(); ++c) {
      const double e = v.fits[static_cast<std::size_t>(c)].evaluate(xi) - targets(i, c);
      err += e * e;
      ref += targets(i, c) * targets(i, c);
      ++count;
    }
  }
  if (count) {
    v.holdout_rms = std::sqrt(err / static_cast<double>(count));
    v.holdout_relative = ref > 0.0 ? std::sqrt(err / ref) : 0.0;
    if (v.holdout_relative > opt.warn_relative)
      v.warning = "vademecum held-out relative RMS " + std::to_string(v.holdout_relative) + " exceeds " + std::to_string(opt.warn_relative);
  }
  return v;
}

}  // namespace mpgd
