#pragma once

// Greedy rank-one PGD with an alternating fixed point. Each load group is
// solved on its own so that every group's coefficient mode stays an exact
// multiple of its ramp and the result is linear in the load coefficients.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mpgd/errors.hpp"
#include "mpgd/physics.hpp"
#include "mpgd/separated.hpp"

namespace mpgd {

struct PgdSettings {
  std::size_t max_rank = 60;  // per load group
  double fixed_point_tol = 1e-6;
  std::size_t max_sweeps = 50;
  double stop_ratio = 1e-4;
  double compression_tol = 0.0;
  std::size_t update_passes = 1;  // joint parametric updates after each enrichment
  std::uint64_t seed = 20240611;

  void validate() const {
    if (max_rank < 1) throw SchemaError("max_rank must be at least 1");
    if (!(fixed_point_tol > 0.0) || !(stop_ratio > 0.0)) throw SchemaError("PGD tolerances must be positive");
    if (max_sweeps < 1) throw SchemaError("max_sweeps must be at least 1");
    if (compression_tol < 0.0) throw SchemaError("compression tolerance must be non-negative");
  }
};

struct EnrichmentRecord {
  std::string group;
  std::size_t rank = 0;
  double energy = 0.0;     // 1/2 a(u,u) - l(u) over the weighted parameter grid
  double indicator = 0.0;  // |new term| / |group solution|
  std::size_t sweeps = 0;
};

struct TransferFunction {
  SeparatedField field;
  std::vector<EnrichmentRecord> history;
  bool converged = true;
  std::string diagnostics;
};

inline void write_convergence_csv(std::ostream& os, const TransferFunction& tf) {
  os << "group,rank,indicator,sweeps,energy\n";
  os.precision(10);
  for (const auto& h : tf.history) os << h.group << ',' << h.rank << ',' << h.indicator << ',' << h.sweeps << ',' << h.energy << '\n';
}

/// Trapezoidal weights of a grid, normalized to sum 1.
inline Eigen::VectorXd trapezoid_weights(const std::vector<double>& grid) {
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double h = grid[static_cast<std::size_t>(i + 1)] - grid[static_cast<std::size_t>(i)];
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w / w.sum();
}

namespace detail {

/// Operator and loads restricted to free DOFs. All operator matrices are
/// stored on one shared sparsity pattern so that a parametric combination is
/// a dense matrix-vector product over the value arrays.
class PgdSystem {
public:
  PgdSystem(const SeparatedOperator& op, std::vector<const LoadTerm*> loads) : op_(op), loads_(std::move(loads)) {
    op.validate();
    if (op.dirichlet_dofs.empty()) throw SolverError("ill-posed module: no Dirichlet DOFs constrain the operator");
    std::vector<char> fixed(op.dofs, 0);
    for (auto d : op.dirichlet_dofs) {
      if (d >= op.dofs) throw SchemaError("Dirichlet DOF out of range");
      fixed[d] = 1;
    }
    for (std::size_t i = 0; i < op.dofs; ++i)
      if (!fixed[i]) free_.push_back(i);
    const auto nf = static_cast<Eigen::Index>(free_.size());
    SparseMatrix p(static_cast<Eigen::Index>(op.dofs), nf);
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t i = 0; i < free_.size(); ++i) trip.emplace_back(static_cast<int>(free_[i]), static_cast<int>(i), 1.0);
    p.setFromTriplets(trip.begin(), trip.end());

    std::vector<SparseMatrix> k;
    for (const auto& t : op.terms) k.push_back(SparseMatrix(p.transpose() * t.matrix * p));
    pattern_ = SparseMatrix(nf, nf);
    for (const auto& m : k) pattern_ += m.cwiseAbs();
    pattern_ *= 0.0;
    values_.resize(pattern_.nonZeros(), static_cast<Eigen::Index>(k.size()));
    for (std::size_t t = 0; t < k.size(); ++t) {
      SparseMatrix aligned = pattern_ + k[t];
      if (aligned.nonZeros() != pattern_.nonZeros()) throw SolverError("operator terms do not share a sparsity pattern");
      values_.col(static_cast<Eigen::Index>(t)) = Eigen::Map<const Eigen::VectorXd>(aligned.valuePtr(), aligned.nonZeros());
    }
    k_ = std::move(k);

    for (const auto* l : loads_) {
      if (l->factors.size() != op.space.size()) throw SchemaError("load term has the wrong number of parametric factors");
      if (static_cast<std::size_t>(l->vector.size()) != op.dofs) throw SchemaError("load vector has the wrong dimension");
    }
    f_.resize(nf, static_cast<Eigen::Index>(loads_.size()));
    for (std::size_t l = 0; l < loads_.size(); ++l) f_.col(static_cast<Eigen::Index>(l)) = p.transpose() * loads_[l]->vector;
    for (std::size_t m = 0; m < op.space.size(); ++m) w_.push_back(trapezoid_weights(op.space.grids[m]));
  }

  std::size_t modes() const { return op_.space.size(); }
  std::size_t free_size() const { return free_.size(); }
  const std::vector<std::size_t>& free_dofs() const { return free_; }
  std::size_t terms() const { return k_.size(); }
  std::size_t loads() const { return loads_.size(); }
  const SparseMatrix& k(std::size_t t) const { return k_[t]; }
  const Eigen::MatrixXd& f() const { return f_; }
  const Eigen::VectorXd& op_factor(std::size_t t, std::size_t m) const { return op_.terms[t].factors[m]; }
  const Eigen::VectorXd& load_factor(std::size_t l, std::size_t m) const { return loads_[l]->factors[m]; }
  const Eigen::VectorXd& weight(std::size_t m) const { return w_[m]; }

  /// sum_t c(t) K_t on the shared pattern.
  SparseMatrix combine(const Eigen::VectorXd& c) const {
    SparseMatrix a = pattern_;
    Eigen::Map<Eigen::VectorXd>(a.valuePtr(), a.nonZeros()) = values_ * c;
    return a;
  }

  /// sum_n w(n) factor(n) a(n) b(n) for one mode.
  double op_mode(std::size_t t, std::size_t m, const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return (w_[m].array() * op_.terms[t].factors[m].array() * a.array() * b.array()).sum();
  }
  double load_mode(std::size_t l, std::size_t m, const Eigen::VectorXd& a) const {
    return (w_[m].array() * loads_[l]->factors[m].array() * a.array()).sum();
  }

private:
  const SeparatedOperator& op_;
  std::vector<const LoadTerm*> loads_;
  std::vector<std::size_t> free_;
  std::vector<SparseMatrix> k_;
  SparseMatrix pattern_;
  Eigen::MatrixXd values_;  // nnz x terms
  Eigen::MatrixXd f_;       // free DOFs x loads
  std::vector<Eigen::VectorXd> w_;
};

struct RankOne {
  Eigen::VectorXd space;               // free DOFs
  std::vector<Eigen::VectorXd> modes;  // unit-norm parametric vectors
};

/// Greedy solution of one load group. After every enrichment the parametric
/// modes of all terms of the group are updated jointly, one mode at a time;
/// each update minimizes the energy exactly, pointwise on the grid.
class GroupSolver {
public:
  GroupSolver(const PgdSystem& sys, const PgdSettings& s, std::mt19937_64& rng) : sys_(sys), s_(s), rng_(rng) {
    x_.resize(static_cast<Eigen::Index>(sys.free_size()), 0);
    g_.assign(sys.terms(), Eigen::MatrixXd());
    w_.assign(sys.terms(), std::vector<Eigen::MatrixXd>(sys.modes()));
    lw_.assign(sys.loads(), std::vector<Eigen::VectorXd>(sys.modes()));
  }

  /// Returns false when max_rank was reached above the stopping ratio.
  bool run(const std::string& group, std::vector<RankOne>& out, std::vector<EnrichmentRecord>& history) {
    bool converged = sys_.f().squaredNorm() == 0.0;
    while (!converged && rank() < s_.max_rank) {
      std::size_t sweeps = 0;
      RankOne t = enrich(sweeps);
      double tn = t.space.norm();
      for (const auto& m : t.modes) tn *= m.norm();
      if (tn == 0.0) {
        converged = true;
        break;
      }
      add(t);
      for (std::size_t pass = 0; pass < s_.update_passes; ++pass)
        for (std::size_t m = 0; m < sys_.modes(); ++m) update_mode(m);
      const double ratio = tn / std::sqrt(std::max(field_norm2(), tn * tn * 1e-300));
      history.push_back({group, rank(), energy(), ratio, sweeps});
      converged = ratio < s_.stop_ratio;
    }
    for (std::size_t r = 0; r < rank(); ++r) {
      if (x_.col(static_cast<Eigen::Index>(r)).squaredNorm() == 0.0) continue;
      RankOne t;
      t.space = x_.col(static_cast<Eigen::Index>(r));
      for (std::size_t m = 0; m < sys_.modes(); ++m) t.modes.push_back(f_[m].col(static_cast<Eigen::Index>(r)));
      out.push_back(std::move(t));
    }
    return converged;
  }

private:
  std::size_t rank() const { return static_cast<std::size_t>(x_.cols()); }
  Eigen::Index n(std::size_t m) const { return sys_.weight(m).size(); }

  // ---- bookkeeping over the accepted terms -------------------------------

  /// Weighted mode products between accepted terms r and s for operator term k.
  Eigen::MatrixXd mode_table(std::size_t k, std::size_t m) const {
    const Eigen::VectorXd wf = sys_.weight(m).cwiseProduct(sys_.op_factor(k, m));
    return f_[m].transpose() * wf.asDiagonal() * f_[m];
  }
  Eigen::VectorXd load_table(std::size_t l, std::size_t m) const {
    return f_[m].transpose() * sys_.weight(m).cwiseProduct(sys_.load_factor(l, m));
  }
  void refresh_tables(std::size_t m) {
    for (std::size_t k = 0; k < sys_.terms(); ++k) w_[k][m] = mode_table(k, m);
    for (std::size_t l = 0; l < sys_.loads(); ++l) lw_[l][m] = load_table(l, m);
  }

  void add(const RankOne& t) {
    const Eigen::Index r = static_cast<Eigen::Index>(rank());
    x_.conservativeResize(Eigen::NoChange, r + 1);
    x_.col(r) = t.space;
    if (f_.empty()) f_.assign(sys_.modes(), Eigen::MatrixXd());
    for (std::size_t m = 0; m < sys_.modes(); ++m) {
      f_[m].conservativeResize(n(m), r + 1);
      f_[m].col(r) = t.modes[m];
    }
    for (std::size_t k = 0; k < sys_.terms(); ++k) {
      const Eigen::VectorXd kx = sys_.k(k) * t.space;
      Eigen::MatrixXd& g = g_[k];
      g.conservativeResize(r + 1, r + 1);
      g.col(r) = x_.transpose() * kx;
      g.row(r) = g.col(r).transpose();
    }
    xf_ = x_.transpose() * sys_.f();
    for (std::size_t m = 0; m < sys_.modes(); ++m) refresh_tables(m);
  }

  double energy() const {
    double e = 0.0;
    for (std::size_t k = 0; k < sys_.terms(); ++k) {
      Eigen::MatrixXd p = g_[k];
      for (std::size_t m = 0; m < sys_.modes(); ++m) p = p.cwiseProduct(w_[k][m]);
      e += 0.5 * p.sum();
    }
    for (std::size_t l = 0; l < sys_.loads(); ++l) {
      Eigen::VectorXd p = xf_.col(static_cast<Eigen::Index>(l));
      for (std::size_t m = 0; m < sys_.modes(); ++m) p = p.cwiseProduct(lw_[l][m]);
      e -= p.sum();
    }
    return e;
  }

  double field_norm2() const {
    Eigen::MatrixXd p = x_.transpose() * x_;
    for (std::size_t m = 0; m < sys_.modes(); ++m) p = p.cwiseProduct(f_[m].transpose() * f_[m]);
    return p.sum();
  }

  /// Exact minimization over mode m of all accepted terms, followed by renormalization.
  void update_mode(std::size_t m) {
    const Eigen::Index r = static_cast<Eigen::Index>(rank());
    std::vector<Eigen::MatrixXd> pk(sys_.terms());
    for (std::size_t k = 0; k < sys_.terms(); ++k) {
      pk[k] = g_[k];
      for (std::size_t q = 0; q < sys_.modes(); ++q)
        if (q != m) pk[k] = pk[k].cwiseProduct(w_[k][q]);
    }
    std::vector<Eigen::VectorXd> pl(sys_.loads());
    for (std::size_t l = 0; l < sys_.loads(); ++l) {
      pl[l] = xf_.col(static_cast<Eigen::Index>(l));
      for (std::size_t q = 0; q < sys_.modes(); ++q)
        if (q != m) pl[l] = pl[l].cwiseProduct(lw_[l][q]);
    }
    Eigen::MatrixXd next(n(m), r);
    for (Eigen::Index i = 0; i < n(m); ++i) {
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(r, r);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(r);
      for (std::size_t k = 0; k < sys_.terms(); ++k) a += sys_.op_factor(k, m)(i) * pk[k];
      for (std::size_t l = 0; l < sys_.loads(); ++l) b += sys_.load_factor(l, m)(i) * pl[l];
      if (b.squaredNorm() == 0.0) {
        next.row(i).setZero();
        continue;
      }
      const double ridge = 1e-13 * std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
      a.diagonal().array() += ridge;
      next.row(i) = a.ldlt().solve(b).transpose();
    }
    f_[m] = next;
    // Carry magnitudes on the spatial modes.
    Eigen::VectorXd scale(r);
    for (Eigen::Index j = 0; j < r; ++j) {
      auto col = f_[m].col(j);
      const double nrm = col.norm();
      if (nrm == 0.0) {
        scale(j) = 0.0;
        continue;
      }
      Eigen::Index imax = 0;
      col.cwiseAbs().maxCoeff(&imax);
      const double s = col(imax) < 0.0 ? -nrm : nrm;
      col /= s;
      scale(j) = s;
    }
    x_ = x_ * scale.asDiagonal();
    for (auto& g : g_) g = scale.asDiagonal() * g * scale.asDiagonal();
    xf_ = scale.asDiagonal() * xf_;
    refresh_tables(m);
  }

  // ---- enrichment of one rank-one term -----------------------------------

  /// Cached products of the candidate (x, f) with itself and with accepted terms.
  struct Candidate {
    std::vector<Eigen::VectorXd> f;
    Eigen::MatrixXd self;                     // terms x modes: op_mode(k, m, f, f)
    std::vector<Eigen::MatrixXd> cross;       // per mode: accepted x terms, op_mode(k, m, f, F_r)
    Eigen::MatrixXd load;                     // loads x modes
  };

  void refresh(Candidate& c, std::size_t m) const {
    const Eigen::VectorXd& v = c.f[m];
    for (std::size_t k = 0; k < sys_.terms(); ++k) {
      const Eigen::VectorXd wf = sys_.weight(m).cwiseProduct(sys_.op_factor(k, m)).cwiseProduct(v);
      c.self(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m)) = wf.dot(v);
      if (rank()) c.cross[m].col(static_cast<Eigen::Index>(k)) = f_[m].transpose() * wf;
    }
    for (std::size_t l = 0; l < sys_.loads(); ++l) c.load(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m)) = sys_.load_mode(l, m, v);
  }

  Eigen::VectorXd solve_space(const Candidate& c) {
    const Eigen::Index terms = static_cast<Eigen::Index>(sys_.terms());
    const Eigen::VectorXd coef = c.self.rowwise().prod();
    Eigen::VectorXd b = sys_.f() * c.load.rowwise().prod();
    if (rank()) {
      Eigen::MatrixXd cross = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(rank()), terms);
      for (const auto& t : c.cross) cross = cross.cwiseProduct(t);
      const Eigen::MatrixXd xc = x_ * cross;  // free DOFs x terms
      for (std::size_t k = 0; k < sys_.terms(); ++k) b -= sys_.k(k) * xc.col(static_cast<Eigen::Index>(k));
    }
    if (b.squaredNorm() == 0.0) return Eigen::VectorXd::Zero(b.size());
    const SparseMatrix a = sys_.combine(coef);
    if (!analysed_) {
      ldlt_.analyzePattern(a);
      analysed_ = true;
    }
    ldlt_.factorize(a);
    if (ldlt_.info() != Eigen::Success) throw SolverError("spatial PGD system is singular");
    return ldlt_.solve(b);
  }

  /// Pointwise (lumped) update of parametric mode m for spatial function x.
  Eigen::VectorXd solve_mode(std::size_t m, const Eigen::VectorXd& xkx, const Eigen::MatrixXd& xkr,
                             const Eigen::VectorXd& xfl, const Candidate& c) const {
    const Eigen::Index terms = static_cast<Eigen::Index>(sys_.terms());
    Eigen::VectorXd num = Eigen::VectorXd::Zero(n(m)), den = Eigen::VectorXd::Zero(n(m));
    for (Eigen::Index k = 0; k < terms; ++k) {
      double p = xkx(k);
      for (std::size_t q = 0; q < sys_.modes(); ++q)
        if (q != m) p *= c.self(k, static_cast<Eigen::Index>(q));
      den += p * sys_.op_factor(static_cast<std::size_t>(k), m);
    }
    if (rank()) {
      Eigen::MatrixXd cross = xkr;  // accepted x terms
      for (std::size_t q = 0; q < sys_.modes(); ++q)
        if (q != m) cross = cross.cwiseProduct(c.cross[q]);
      // sum_k factor_k(n) sum_r cross(r, k) F_rm(n)
      Eigen::MatrixXd factors(n(m), terms);
      for (Eigen::Index k = 0; k < terms; ++k) factors.col(k) = sys_.op_factor(static_cast<std::size_t>(k), m);
      num -= (factors.cwiseProduct(f_[m] * cross)).rowwise().sum();
    }
    for (std::size_t l = 0; l < sys_.loads(); ++l) {
      double p = xfl(static_cast<Eigen::Index>(l));
      for (std::size_t q = 0; q < sys_.modes(); ++q)
        if (q != m) p *= c.load(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(q));
      num += p * sys_.load_factor(l, m);
    }
    Eigen::VectorXd out(n(m));
    for (Eigen::Index i = 0; i < n(m); ++i) {
      if (!(den(i) > 0.0)) throw SolverError("parametric PGD update lost positivity");
      out(i) = num(i) / den(i);
    }
    return out;
  }

  static bool normalize(Eigen::VectorXd& v) {
    const double nrm = v.norm();
    if (nrm == 0.0) return false;
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    v *= (v(imax) < 0.0 ? -1.0 : 1.0) / nrm;
    return true;
  }

  static double relative_change(const RankOne& a, const RankOne& b) {
    // |a - b|^2 = |a|^2 + |b|^2 - 2 <a, b> for rank-one tensors.
    double na = a.space.squaredNorm(), nb = b.space.squaredNorm(), ab = a.space.dot(b.space);
    for (std::size_t m = 0; m < a.modes.size(); ++m) {
      na *= a.modes[m].squaredNorm();
      nb *= b.modes[m].squaredNorm();
      ab *= a.modes[m].dot(b.modes[m]);
    }
    if (nb == 0.0) return na == 0.0 ? 0.0 : 1.0;
    return std::sqrt(std::max(0.0, na + nb - 2.0 * ab) / nb);
  }

  RankOne enrich(std::size_t& sweeps) {
    const std::size_t modes = sys_.modes();
    Candidate c;
    c.self.resize(static_cast<Eigen::Index>(sys_.terms()), static_cast<Eigen::Index>(modes));
    c.cross.assign(modes, Eigen::MatrixXd(static_cast<Eigen::Index>(rank()), static_cast<Eigen::Index>(sys_.terms())));
    c.load.resize(static_cast<Eigen::Index>(sys_.loads()), static_cast<Eigen::Index>(modes));
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (std::size_t m = 0; m < modes; ++m) {
      Eigen::VectorXd v(n(m));
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = u(rng_);
      normalize(v);
      c.f.push_back(std::move(v));
      refresh(c, m);
    }
    RankOne t{solve_space(c), c.f};
    const Eigen::Index terms = static_cast<Eigen::Index>(sys_.terms());
    for (sweeps = 1; sweeps <= s_.max_sweeps; ++sweeps) {
      if (t.space.squaredNorm() == 0.0) return t;
      // Spatial contractions are fixed while the parametric modes are updated.
      Eigen::VectorXd xkx(terms);
      Eigen::MatrixXd kx(t.space.size(), terms);
      for (Eigen::Index k = 0; k < terms; ++k) {
        kx.col(k) = sys_.k(static_cast<std::size_t>(k)) * t.space;
        xkx(k) = t.space.dot(kx.col(k));
      }
      const Eigen::MatrixXd xkr = x_.transpose() * kx;  // accepted x terms
      const Eigen::VectorXd xfl = sys_.f().transpose() * t.space;
      for (std::size_t m = 0; m < modes; ++m) {
        c.f[m] = solve_mode(m, xkx, xkr, xfl, c);
        if (!normalize(c.f[m])) return RankOne{Eigen::VectorXd::Zero(t.space.size()), c.f};
        refresh(c, m);
      }
      RankOne next{solve_space(c), c.f};
      const double change = relative_change(next, t);
      t = std::move(next);
      if (change < s_.fixed_point_tol) return t;
    }
    sweeps = s_.max_sweeps;
    return t;
  }

  const PgdSystem& sys_;
  const PgdSettings& s_;
  std::mt19937_64& rng_;
  Eigen::MatrixXd x_;                              // free DOFs x accepted terms
  std::vector<Eigen::MatrixXd> f_;                 // per mode: grid x accepted terms
  std::vector<Eigen::MatrixXd> g_;                 // per operator term: X^T K X
  std::vector<std::vector<Eigen::MatrixXd>> w_;    // [k][m]: weighted mode products between accepted terms
  std::vector<std::vector<Eigen::VectorXd>> lw_;   // [l][m]: weighted load-mode products
  Eigen::MatrixXd xf_;                             // accepted x loads: X^T f
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
  bool analysed_ = false;
};

}  // namespace detail

/// Extra separated terms added verbatim to the solution (Dirichlet liftings).
struct FieldTerm {
  Eigen::VectorXd space;
  std::vector<Eigen::VectorXd> factors;
};

/// Solves K(p) u = f(p) for all parameters. Loads are grouped by LoadTerm::group;
/// max_rank applies per group.
inline TransferFunction solve(const SeparatedOperator& op, const std::vector<LoadTerm>& loads, const PgdSettings& settings,
                              const std::vector<FieldTerm>& lifting = {}) {
  settings.validate();
  std::vector<std::string> groups;
  std::map<std::string, std::vector<const LoadTerm*>> by_group;
  for (const auto& l : loads) {
    if (!by_group.count(l.group)) groups.push_back(l.group);
    by_group[l.group].push_back(&l);
  }

  TransferFunction tf;
  tf.field = op.space.empty_field(op.dofs);
  std::mt19937_64 rng(settings.seed);
  std::vector<detail::RankOne> terms;
  std::vector<std::size_t> free;
  if (groups.empty() && op.dirichlet_dofs.empty()) throw SolverError("ill-posed module: no Dirichlet DOFs constrain the operator");
  for (const auto& g : groups) {
    detail::PgdSystem sys(op, by_group[g]);
    free = sys.free_dofs();
    detail::GroupSolver solver(sys, settings, rng);
    if (!solver.run(g, terms, tf.history)) {
      tf.converged = false;
      tf.diagnostics += "group '" + g + "' reached max_rank " + std::to_string(settings.max_rank) + " with indicator " +
                        std::to_string(tf.history.back().indicator) + "; ";
    }
  }

  auto& modes = tf.field.mutable_modes();
  const auto rank = static_cast<Eigen::Index>(terms.size() + lifting.size());
  for (auto& m : modes) m.terms.setZero(static_cast<Eigen::Index>(m.size()), rank);
  for (std::size_t r = 0; r < terms.size(); ++r) {
    const auto c = static_cast<Eigen::Index>(r);
    for (std::size_t i = 0; i < free.size(); ++i) modes[0].terms(static_cast<Eigen::Index>(free[i]), c) = terms[r].space(static_cast<Eigen::Index>(i));
    for (std::size_t m = 0; m < terms[r].modes.size(); ++m) modes[m + 1].terms.col(c) = terms[r].modes[m];
  }
  for (std::size_t r = 0; r < lifting.size(); ++r) {
    const auto c = static_cast<Eigen::Index>(terms.size() + r);
    if (static_cast<std::size_t>(lifting[r].space.size()) != op.dofs || lifting[r].factors.size() != op.space.size())
      throw SchemaError("lifting term does not match the operator");
    modes[0].terms.col(c) = lifting[r].space;
    for (std::size_t m = 0; m < lifting[r].factors.size(); ++m) modes[m + 1].terms.col(c) = lifting[r].factors[m];
  }
  tf.field.validate();
  if (settings.compression_tol > 0.0) tf.field = compress(tf.field, settings.compression_tol);
  return tf;
}

/// Direct solve of the particularized operator with homogeneous Dirichlet DOFs.
inline Eigen::VectorXd solve_particular(const SparseMatrix& k, const Eigen::VectorXd& f, const std::vector<std::size_t>& dirichlet,
                                        const Eigen::VectorXd* prescribed = nullptr) {
  const auto n = k.rows();
  std::vector<char> fixed(static_cast<std::size_t>(n), 0);
  for (auto d : dirichlet) fixed[d] = 1;
  std::vector<int> map(static_cast<std::size_t>(n), -1);
  int nf = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!fixed[static_cast<std::size_t>(i)]) map[static_cast<std::size_t>(i)] = nf++;
  Eigen::VectorXd u = prescribed ? *prescribed : Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!fixed[static_cast<std::size_t>(i)]) u(i) = 0.0;
  const Eigen::VectorXd rhs = f - k * u;
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < k.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(k, c); it; ++it) {
      const int a = map[static_cast<std::size_t>(it.row())], b = map[static_cast<std::size_t>(it.col())];
      if (a >= 0 && b >= 0) trip.emplace_back(a, b, it.value());
    }
  SparseMatrix kf(nf, nf);
  kf.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd bf(nf);
  for (Eigen::Index i = 0; i < n; ++i)
    if (map[static_cast<std::size_t>(i)] >= 0) bf(map[static_cast<std::size_t>(i)]) = rhs(i);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(kf);
  if (ldlt.info() != Eigen::Success) throw SolverError("singular system: missing Dirichlet data");
  const Eigen::VectorXd xf = ldlt.solve(bf);
  for (Eigen::Index i = 0; i < n; ++i)
    if (map[static_cast<std::size_t>(i)] >= 0) u(i) = xf(map[static_cast<std::size_t>(i)]);
  return u;
}

struct AffinityReport {
  double max_deviation = 0.0;        // max over samples of |tf - affine truth| / |affine truth|
  std::vector<double> deviations;
};

/// Compares tf against u_0 + sum_j c_j u_j built from direct solves of the
/// particularized operator at `base` (one solve per coefficient plus one).
/// `coefficients` lists the mode labels treated as affine coordinates and
/// `samples` gives values for them.
inline AffinityReport affinity_check(const TransferFunction& tf, const SeparatedOperator& op, const std::vector<LoadTerm>& loads,
                                     const Bindings& base, const std::vector<std::string>& coefficients,
                                     const std::vector<std::vector<double>>& samples, const std::vector<FieldTerm>& lifting = {}) {
  auto solve_at = [&](const Bindings& b) {
    const auto c = op.space.coordinates(b);
    const SparseMatrix k = op.particularize(c);
    Eigen::VectorXd f = particularize_loads(loads, op.space, c, op.dofs);
    Eigen::VectorXd lift = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(op.dofs));
    const auto locs = op.space.locate(c);
    for (const auto& l : lifting) lift += factor_product(l.factors, locs) * l.space;
    return Eigen::VectorXd(solve_particular(k, f, op.dirichlet_dofs, &lift));
  };
  Bindings zero = base;
  for (const auto& c : coefficients) zero[c] = 0.0;
  const Eigen::VectorXd u0 = solve_at(zero);
  std::vector<Eigen::VectorXd> basis;
  for (const auto& c : coefficients) {
    Bindings b = zero;
    b[c] = 1.0;
    basis.push_back(solve_at(b) - u0);
  }
  AffinityReport rep;
  for (const auto& s : samples) {
    if (s.size() != coefficients.size()) throw SchemaError("affinity sample size differs from the coefficient count");
    Bindings b = zero;
    Eigen::VectorXd truth = u0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      b[coefficients[j]] = s[j];
      truth += s[j] * basis[j];
    }
    const Eigen::VectorXd approx = evaluate_spatial(tf.field, b);
    const double scale = truth.norm();
    const double dev = scale > 0.0 ? (approx - truth).norm() / scale : approx.norm();
    rep.deviations.push_back(dev);
    rep.max_deviation = std::max(rep.max_deviation, dev);
  }
  return rep;
}

}  // namespace mpgd
