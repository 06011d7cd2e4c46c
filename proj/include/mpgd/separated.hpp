#pragma once

// Canonical-polyadic (sum of rank-one terms) fields over one spatial mode and
// any number of one-dimensional parametric modes.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpgd/errors.hpp"

namespace mpgd {

using Bindings = std::map<std::string, double>;

enum class ModeKind { spatial, parametric };

/// One direction of a separated representation. Column r of `terms` is the
/// coefficient vector of rank-one term r over `grid`.
struct Mode {
  ModeKind kind = ModeKind::parametric;
  std::string label;
  std::vector<double> grid;
  Eigen::MatrixXd terms;

  std::size_t size() const { return grid.size(); }
  std::size_t rank() const { return static_cast<std::size_t>(terms.cols()); }
  double lower() const { return grid.front(); }
  double upper() const { return grid.back(); }
};

/// Position of a coordinate inside a piecewise-linear grid: value is
/// (1 - weight) * v[index] + weight * v[index + 1].
struct GridLocation {
  std::size_t index = 0;
  double weight = 0.0;
  double width = 1.0;
};

inline GridLocation locate(const std::vector<double>& grid, double x, const std::string& label) {
  const double lo = grid.front();
  const double hi = grid.back();
  const double slack = 1e-12 * std::max(1.0, hi - lo);
  if (!(x >= lo - slack && x <= hi + slack)) {
    throw RangeError("value " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "] for mode '" + label + "'");
  }
  x = std::clamp(x, lo, hi);
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t i = (it == grid.begin()) ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
  i = std::min(i, grid.size() - 2);
  const double width = grid[i + 1] - grid[i];
  return {i, (x - grid[i]) / width, width};
}

/// Uniformly spaced grid with `n` nodes on [lo, hi].
inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  if (n < 2) throw SchemaError("grids need at least two nodes");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  g.back() = hi;
  return g;
}

/// Geometrically spaced grid (constant ratio between successive nodes); lo > 0.
inline std::vector<double> geometric_grid(double lo, double hi, std::size_t n) {
  if (n < 2) throw SchemaError("grids need at least two nodes");
  if (lo <= 0.0) throw SchemaError("geometric grids need a positive lower bound");
  std::vector<double> g(n);
  const double ratio = std::log(hi / lo);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo * std::exp(ratio * static_cast<double>(i) / static_cast<double>(n - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

/// Node indices 0..n-1 as the grid of a spatial mode.
inline std::vector<double> index_grid(std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i);
  return g;
}

/// Piecewise-linear evaluation of one term of a parametric mode.
inline double interpolate(const Mode& mode, std::size_t term, const GridLocation& loc) {
  const double a = mode.terms(static_cast<Eigen::Index>(loc.index), static_cast<Eigen::Index>(term));
  const double b = mode.terms(static_cast<Eigen::Index>(loc.index + 1), static_cast<Eigen::Index>(term));
  return (1.0 - loc.weight) * a + loc.weight * b;
}

/// Slope of the segment holding the location (right segment at interior nodes).
inline double slope(const Mode& mode, std::size_t term, const GridLocation& loc) {
  const double a = mode.terms(static_cast<Eigen::Index>(loc.index), static_cast<Eigen::Index>(term));
  const double b = mode.terms(static_cast<Eigen::Index>(loc.index + 1), static_cast<Eigen::Index>(term));
  return (b - a) / loc.width;
}

class SeparatedField {
public:
  SeparatedField() = default;

  /// Empty (rank 0) field with the given spatial size and parametric grids.
  SeparatedField(std::size_t spatial_size, std::vector<std::pair<std::string, std::vector<double>>> parametric) {
    Mode s;
    s.kind = ModeKind::spatial;
    s.label = "space";
    s.grid = index_grid(spatial_size);
    s.terms.resize(static_cast<Eigen::Index>(spatial_size), 0);
    modes_.push_back(std::move(s));
    for (auto& [label, grid] : parametric) {
      Mode m;
      m.kind = ModeKind::parametric;
      m.label = label;
      m.grid = std::move(grid);
      m.terms.resize(static_cast<Eigen::Index>(m.grid.size()), 0);
      modes_.push_back(std::move(m));
    }
    validate();
  }

  explicit SeparatedField(std::vector<Mode> modes) : modes_(std::move(modes)) { validate(); }

  std::size_t rank() const { return modes_.empty() ? 0 : modes_.front().rank(); }
  std::size_t mode_count() const { return modes_.size(); }
  std::size_t parametric_count() const { return modes_.empty() ? 0 : modes_.size() - 1; }
  std::size_t spatial_size() const { return modes_.front().size(); }
  const std::vector<Mode>& modes() const { return modes_; }
  const Mode& mode(std::size_t i) const { return modes_.at(i); }
  const Mode& spatial() const { return modes_.front(); }

  /// Index into modes() of the parametric mode with this label.
  std::size_t index_of(const std::string& label) const {
    for (std::size_t i = 1; i < modes_.size(); ++i)
      if (modes_[i].label == label) return i;
    throw SchemaError("unknown mode label '" + label + "'");
  }
  bool has_mode(const std::string& label) const {
    for (std::size_t i = 1; i < modes_.size(); ++i)
      if (modes_[i].label == label) return true;
    return false;
  }
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (std::size_t i = 1; i < modes_.size(); ++i) out.push_back(modes_[i].label);
    return out;
  }

  /// Mutable access for builders in this library; invariants are rechecked by validate().
  std::vector<Mode>& mutable_modes() { return modes_; }

  void validate() const {
    if (modes_.empty()) throw SchemaError("separated field without modes");
    if (modes_.front().kind != ModeKind::spatial) throw SchemaError("first mode must be spatial");
    const auto r = modes_.front().rank();
    std::set<std::string> seen;
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      const Mode& m = modes_[i];
      if (i > 0 && m.kind != ModeKind::parametric) throw SchemaError("only the first mode may be spatial");
      if (m.grid.size() < 2 && m.kind == ModeKind::parametric)
        throw SchemaError("mode '" + m.label + "' needs at least two grid points");
      for (std::size_t k = 1; k < m.grid.size(); ++k)
        if (!(m.grid[k] > m.grid[k - 1])) throw SchemaError("grid of mode '" + m.label + "' is not increasing");
      if (static_cast<std::size_t>(m.terms.rows()) != m.grid.size())
        throw SchemaError("mode '" + m.label + "' coefficient length differs from its grid");
      if (m.rank() != r) throw SchemaError("mode '" + m.label + "' holds a different number of terms");
      if (i > 0 && !seen.insert(m.label).second) throw SchemaError("duplicate mode label '" + m.label + "'");
    }
  }

private:
  std::vector<Mode> modes_;
};

/// Point for evaluate(): a spatial node index and one coordinate per parametric mode.
struct FieldPoint {
  std::size_t node = 0;
  std::vector<double> coords;
};

inline std::vector<GridLocation> locate_all(const SeparatedField& f, std::span<const double> coords) {
  if (coords.size() != f.parametric_count()) throw SchemaError("point dimension differs from the field's mode count");
  std::vector<GridLocation> locs(coords.size());
  for (std::size_t m = 0; m < coords.size(); ++m) locs[m] = locate(f.mode(m + 1).grid, coords[m], f.mode(m + 1).label);
  return locs;
}

/// Per-term product of the parametric factors at the given coordinates.
inline Eigen::VectorXd parametric_factors(const SeparatedField& f, std::span<const double> coords) {
  const auto locs = locate_all(f, coords);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(f.rank()));
  for (std::size_t r = 0; r < f.rank(); ++r)
    for (std::size_t m = 0; m < locs.size(); ++m) w(static_cast<Eigen::Index>(r)) *= interpolate(f.mode(m + 1), r, locs[m]);
  return w;
}

inline double evaluate(const SeparatedField& f, const FieldPoint& p) {
  if (p.node >= f.spatial_size()) throw RangeError("spatial node index out of range");
  const Eigen::VectorXd w = parametric_factors(f, p.coords);
  return f.spatial().terms.row(static_cast<Eigen::Index>(p.node)).dot(w);
}

/// Spatial vector obtained by fixing every parametric coordinate.
inline Eigen::VectorXd evaluate_spatial(const SeparatedField& f, std::span<const double> coords) {
  if (f.rank() == 0) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(f.spatial_size()));
  return f.spatial().terms * parametric_factors(f, coords);
}

/// Spatial vector for a label -> value map covering every parametric mode.
inline Eigen::VectorXd evaluate_spatial(const SeparatedField& f, const Bindings& values) {
  std::vector<double> coords(f.parametric_count());
  for (std::size_t m = 1; m < f.mode_count(); ++m) {
    auto it = values.find(f.mode(m).label);
    if (it == values.end()) throw SchemaError("no value bound for mode '" + f.mode(m).label + "'");
    coords[m - 1] = it->second;
  }
  return evaluate_spatial(f, coords);
}

/// Derivative of the spatial vector with respect to one parametric coordinate.
inline Eigen::VectorXd derivative_spatial(const SeparatedField& f, std::span<const double> coords, std::size_t mode_index) {
  const auto locs = locate_all(f, coords);
  Eigen::VectorXd w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(f.rank()));
  for (std::size_t r = 0; r < f.rank(); ++r)
    for (std::size_t m = 0; m < locs.size(); ++m) {
      const Mode& mode = f.mode(m + 1);
      w(static_cast<Eigen::Index>(r)) *= (m + 1 == mode_index) ? slope(mode, r, locs[m]) : interpolate(mode, r, locs[m]);
    }
  return f.spatial().terms * w;
}

/// Removes the bound modes, folding their interpolated values into the spatial mode.
inline SeparatedField particularize(const SeparatedField& f, const Bindings& bindings) {
  std::vector<bool> bound(f.mode_count(), false);
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(f.rank()));
  for (const auto& [label, value] : bindings) {
    const std::size_t m = f.index_of(label);
    const Mode& mode = f.mode(m);
    const auto loc = locate(mode.grid, value, label);
    bound[m] = true;
    for (std::size_t r = 0; r < f.rank(); ++r) scale(static_cast<Eigen::Index>(r)) *= interpolate(mode, r, loc);
  }
  std::vector<Mode> modes;
  Mode s = f.spatial();
  s.terms = s.terms * scale.asDiagonal();
  modes.push_back(std::move(s));
  for (std::size_t m = 1; m < f.mode_count(); ++m)
    if (!bound[m]) modes.push_back(f.mode(m));
  return SeparatedField(std::move(modes));
}

/// Appends one rank-one term given as one vector per mode (spatial first).
inline SeparatedField add_term(const SeparatedField& f, std::span<const Eigen::VectorXd> term) {
  if (term.size() != f.mode_count()) throw SchemaError("term has a different number of modes than the field");
  std::vector<Mode> modes = f.modes();
  for (std::size_t m = 0; m < modes.size(); ++m) {
    if (static_cast<std::size_t>(term[m].size()) != modes[m].size())
      throw SchemaError("term vector length differs from the grid of mode '" + modes[m].label + "'");
    modes[m].terms.conservativeResize(Eigen::NoChange, modes[m].terms.cols() + 1);
    modes[m].terms.col(modes[m].terms.cols() - 1) = term[m];
  }
  return SeparatedField(std::move(modes));
}

/// Gram matrix G(r, s) = prod_m <v_m^r, v_m^s> (plain Euclidean products).
inline Eigen::MatrixXd gram(const SeparatedField& a, const SeparatedField& b) {
  if (a.mode_count() != b.mode_count()) throw SchemaError("fields have different mode structure");
  Eigen::MatrixXd g = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(a.rank()), static_cast<Eigen::Index>(b.rank()));
  for (std::size_t m = 0; m < a.mode_count(); ++m) {
    if (a.mode(m).size() != b.mode(m).size()) throw SchemaError("fields have different grids");
    g = g.cwiseProduct(a.mode(m).terms.transpose() * b.mode(m).terms);
  }
  return g;
}

inline double dot(const SeparatedField& a, const SeparatedField& b) { return gram(a, b).sum(); }

/// Frobenius norm of the dense tensor the field represents.
inline double norm2(const SeparatedField& f) {
  if (f.rank() == 0) return 0.0;
  return std::sqrt(std::max(0.0, gram(f, f).sum()));
}

/// Merges terms whose parametric vectors coincide up to scaling and drops
/// terms below tol * norm2(f). tol = 0 merges only numerically identical
/// directions, so evaluations are reproduced to rounding.
inline SeparatedField compress(const SeparatedField& f, double tol) {
  if (tol < 0.0) throw SchemaError("compression tolerance must be non-negative");
  const std::size_t rank = f.rank();
  const std::size_t nm = f.mode_count();
  const double merge_tol = std::max(tol, 1e-13);

  // Normalize every parametric vector (unit norm, largest entry positive).
  std::vector<std::vector<Eigen::VectorXd>> dir(rank, std::vector<Eigen::VectorXd>(nm));
  std::vector<Eigen::VectorXd> spatial(rank);
  std::vector<bool> zero(rank, false);
  for (std::size_t r = 0; r < rank; ++r) {
    double s = 1.0;
    for (std::size_t m = 1; m < nm; ++m) {
      Eigen::VectorXd v = f.mode(m).terms.col(static_cast<Eigen::Index>(r));
      const double n = v.norm();
      if (n == 0.0) {
        zero[r] = true;
        break;
      }
      Eigen::Index imax = 0;
      v.cwiseAbs().maxCoeff(&imax);
      const double sign = v(imax) < 0.0 ? -1.0 : 1.0;
      dir[r][m] = v * (sign / n);
      s *= sign * n;
    }
    spatial[r] = f.spatial().terms.col(static_cast<Eigen::Index>(r)) * s;
  }

  std::vector<std::size_t> kept;
  for (std::size_t r = 0; r < rank; ++r) {
    if (zero[r]) continue;
    bool merged = false;
    for (std::size_t k : kept) {
      bool same = true;
      for (std::size_t m = 1; m < nm && same; ++m) same = (dir[k][m] - dir[r][m]).norm() <= merge_tol;
      if (same) {
        spatial[k] += spatial[r];
        merged = true;
        break;
      }
    }
    if (!merged) kept.push_back(r);
  }

  const double total = norm2(f);
  const double drop = (tol > 0.0 && !kept.empty()) ? tol * total / std::sqrt(static_cast<double>(kept.size())) : 0.0;
  std::vector<std::size_t> out;
  for (std::size_t k : kept)
    if (spatial[k].norm() > drop && spatial[k].norm() > 0.0) out.push_back(k);

  std::vector<Mode> modes = f.modes();
  for (std::size_t m = 0; m < nm; ++m) {
    modes[m].terms.resize(static_cast<Eigen::Index>(modes[m].size()), static_cast<Eigen::Index>(out.size()));
    for (std::size_t i = 0; i < out.size(); ++i)
      modes[m].terms.col(static_cast<Eigen::Index>(i)) = (m == 0) ? spatial[out[i]] : dir[out[i]][m];
  }
  return SeparatedField(std::move(modes));
}

/// Concatenates the terms of two fields with identical mode structure.
inline SeparatedField concatenate(const SeparatedField& a, const SeparatedField& b) {
  if (a.mode_count() != b.mode_count()) throw SchemaError("fields have different mode structure");
  std::vector<Mode> modes = a.modes();
  for (std::size_t m = 0; m < modes.size(); ++m) {
    if (a.mode(m).label != b.mode(m).label || a.mode(m).grid != b.mode(m).grid)
      throw SchemaError("fields have different grids in mode '" + a.mode(m).label + "'");
    Eigen::MatrixXd t(a.mode(m).terms.rows(), a.mode(m).terms.cols() + b.mode(m).terms.cols());
    t.leftCols(a.mode(m).terms.cols()) = a.mode(m).terms;
    t.rightCols(b.mode(m).terms.cols()) = b.mode(m).terms;
    modes[m].terms = std::move(t);
  }
  return SeparatedField(std::move(modes));
}

}  // namespace mpgd
