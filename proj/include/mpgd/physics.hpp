#pragma once

// Parameter-separated weak forms on the reference square: steady diffusion
// mapped through a parametric NURBS patch, edge loads, and first-order
// shear-deformable plates on rectangles.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "mpgd/basis.hpp"
#include "mpgd/cp_compress.hpp"
#include "mpgd/errors.hpp"
#include "mpgd/geometry.hpp"
#include "mpgd/mesh.hpp"
#include "mpgd/separated.hpp"

namespace mpgd {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Labels and grids of the parametric modes shared by an operator, its loads and its solution.
struct ParametricSpace {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> grids;

  std::size_t size() const { return labels.size(); }
  std::size_t index(const std::string& label) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) return i;
    throw SchemaError("no parametric mode '" + label + "'");
  }
  bool contains(const std::string& label) const {
    for (const auto& l : labels)
      if (l == label) return true;
    return false;
  }
  Eigen::VectorXd ones(std::size_t k) const { return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(grids[k].size())); }
  Eigen::VectorXd ramp(std::size_t k) const {
    return Eigen::Map<const Eigen::VectorXd>(grids[k].data(), static_cast<Eigen::Index>(grids[k].size()));
  }
  std::vector<Eigen::VectorXd> all_ones() const {
    std::vector<Eigen::VectorXd> f;
    for (std::size_t k = 0; k < size(); ++k) f.push_back(ones(k));
    return f;
  }
  /// Empty separated field over these modes.
  SeparatedField empty_field(std::size_t spatial_size) const {
    std::vector<std::pair<std::string, std::vector<double>>> modes;
    for (std::size_t k = 0; k < size(); ++k) modes.emplace_back(labels[k], grids[k]);
    return SeparatedField(spatial_size, std::move(modes));
  }
  std::vector<GridLocation> locate(std::span<const double> coords) const {
    if (coords.size() != size()) throw SchemaError("coordinate count differs from the parametric space");
    std::vector<GridLocation> locs(size());
    for (std::size_t k = 0; k < size(); ++k) locs[k] = mpgd::locate(grids[k], coords[k], labels[k]);
    return locs;
  }
  std::vector<double> coordinates(const Bindings& values) const {
    std::vector<double> c(size());
    for (std::size_t k = 0; k < size(); ++k) {
      auto it = values.find(labels[k]);
      if (it == values.end()) throw SchemaError("no value bound for mode '" + labels[k] + "'");
      c[k] = it->second;
    }
    return c;
  }
};

inline double interpolate_factor(const Eigen::VectorXd& f, const GridLocation& loc) {
  return (1.0 - loc.weight) * f(static_cast<Eigen::Index>(loc.index)) + loc.weight * f(static_cast<Eigen::Index>(loc.index + 1));
}

/// One separated operator contribution: matrix * prod_k factors[k](p_k).
struct OperatorTerm {
  SparseMatrix matrix;
  std::vector<Eigen::VectorXd> factors;
};

/// One separated load contribution: vector * prod_k factors[k](p_k).
/// Terms sharing a group belong to the same load case.
struct LoadTerm {
  Eigen::VectorXd vector;
  std::vector<Eigen::VectorXd> factors;
  std::string group;
};

inline double factor_product(const std::vector<Eigen::VectorXd>& factors, const std::vector<GridLocation>& locs) {
  double w = 1.0;
  for (std::size_t k = 0; k < factors.size(); ++k) w *= interpolate_factor(factors[k], locs[k]);
  return w;
}

struct SeparatedOperator {
  ParametricSpace space;
  std::size_t dofs = 0;
  std::vector<OperatorTerm> terms;
  std::vector<std::size_t> dirichlet_dofs;

  void validate() const {
    for (const auto& t : terms) {
      if (static_cast<std::size_t>(t.matrix.rows()) != dofs || static_cast<std::size_t>(t.matrix.cols()) != dofs)
        throw SchemaError("operator term has the wrong dimension");
      if (t.factors.size() != space.size()) throw SchemaError("operator term has the wrong number of parametric factors");
      for (std::size_t k = 0; k < space.size(); ++k)
        if (static_cast<std::size_t>(t.factors[k].size()) != space.grids[k].size())
          throw SchemaError("operator factor length differs from the grid of '" + space.labels[k] + "'");
    }
  }

  SparseMatrix particularize(std::span<const double> coords) const {
    const auto locs = space.locate(coords);
    SparseMatrix k(static_cast<Eigen::Index>(dofs), static_cast<Eigen::Index>(dofs));
    for (const auto& t : terms) k += factor_product(t.factors, locs) * t.matrix;
    return k;
  }
};

inline Eigen::VectorXd particularize_loads(const std::vector<LoadTerm>& loads, const ParametricSpace& space, std::span<const double> coords,
                                           std::size_t dofs) {
  const auto locs = space.locate(coords);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dofs));
  for (const auto& t : loads) f += factor_product(t.factors, locs) * t.vector;
  return f;
}

namespace detail {

/// Bindings of every geometric parameter at one column of the full parameter grid.
inline std::vector<Bindings> geometry_grid(const GeometryParametrization& g, const ParametricSpace& space, std::vector<std::size_t>& modes,
                                           std::vector<std::size_t>& extents) {
  modes.clear();
  extents.clear();
  for (const auto& p : g.parameters) {
    if (!space.contains(p.name)) throw SchemaError("geometric parameter '" + p.name + "' has no parametric mode");
    modes.push_back(space.index(p.name));
    extents.push_back(space.grids[modes.back()].size());
  }
  std::size_t total = 1;
  for (auto e : extents) total *= e;
  std::vector<Bindings> out(total);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t r = c;
    for (std::size_t k = 0; k < modes.size(); ++k) {
      out[c][g.parameters[k].name] = space.grids[modes[k]][r % extents[k]];
      r /= extents[k];
    }
  }
  return out;
}

/// Factors of every operator/load term built from a compressed coefficient set.
inline std::vector<std::vector<Eigen::VectorXd>> compressed_factors(const CompressedCoefficients& c, const ParametricSpace& space,
                                                                    const std::vector<std::size_t>& modes) {
  std::vector<std::vector<Eigen::VectorXd>> out;
  for (std::size_t t = 0; t < c.terms(); ++t) {
    auto f = space.all_ones();
    for (std::size_t k = 0; k < modes.size(); ++k) f[modes[k]] = c.param_modes[k].col(static_cast<Eigen::Index>(t));
    out.push_back(std::move(f));
  }
  return out;
}

inline CompressedCoefficients compress_or_copy(const SampledTensor& s, double rel_tol, std::size_t max_rank) {
  const double scale = s.data.size() ? s.data.cwiseAbs().maxCoeff() : 0.0;
  if (scale == 0.0) {
    CompressedCoefficients c;
    c.row_modes.resize(static_cast<Eigen::Index>(s.rows), 0);
    c.param_modes.assign(s.extents.size(), Eigen::MatrixXd());
    for (std::size_t k = 0; k < s.extents.size(); ++k) c.param_modes[k].resize(static_cast<Eigen::Index>(s.extents[k]), 0);
    return c;
  }
  auto c = cp_compress_coefficients(s, rel_tol * scale, max_rank);
  if (!c.reached) std::cerr << "warning: " << c.warning << "\n";
  return c;
}

/// Symmetric-gradient diffusion matrix for coefficients C(e, q) given per element and quadrature point.
inline SparseMatrix diffusion_matrix(const StructuredMesh& mesh, const GaussRule& rule, const Eigen::VectorXd& coeffs) {
  const std::size_t nq = rule.points.size() * rule.points.size();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.element_count() * 16);
  const double h1 = mesh.h1(), h2 = mesh.h2();
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto nodes = mesh.element_nodes(e);
    Eigen::Matrix4d ke = Eigen::Matrix4d::Zero();
    std::size_t q = 0;
    for (std::size_t b = 0; b < rule.points.size(); ++b) {
      for (std::size_t a = 0; a < rule.points.size(); ++a, ++q) {
        const auto s = quad_shape(rule.points[a], rule.points[b], h1, h2);
        const std::size_t row = (e * nq + q) * 3;
        Mat2 c;
        c << coeffs(static_cast<Eigen::Index>(row)), coeffs(static_cast<Eigen::Index>(row + 1)), coeffs(static_cast<Eigen::Index>(row + 1)),
            coeffs(static_cast<Eigen::Index>(row + 2));
        const double w = rule.weights[a] * rule.weights[b] * h1 * h2;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j) ke(i, j) += w * s.grad[i].dot(c * s.grad[j]);
      }
    }
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) trip.emplace_back(static_cast<int>(nodes[i]), static_cast<int>(nodes[j]), ke(i, j));
  }
  SparseMatrix k(static_cast<Eigen::Index>(mesh.node_count()), static_cast<Eigen::Index>(mesh.node_count()));
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

/// Reference-domain conductivity tensor k * det(J) * J^-1 J^-T at every quadrature point.
inline Eigen::VectorXd metric_coefficients(const StructuredMesh& mesh, const GaussRule& rule, const ReferencePatch& patch,
                                           const std::vector<Vec2>& net, double conductivity, const Bindings& p) {
  const std::size_t nq = rule.points.size() * rule.points.size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(mesh.element_count() * nq * 3));
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const Vec2 o = mesh.element_origin(e);
    std::size_t q = 0;
    for (std::size_t b = 0; b < rule.points.size(); ++b)
      for (std::size_t a = 0; a < rule.points.size(); ++a, ++q) {
        const Vec2 xi(o.x() + rule.points[a] * mesh.h1(), o.y() + rule.points[b] * mesh.h2());
        const auto m = checked_jacobian(patch, net, xi, p);
        const Mat2 inv = m.jacobian.inverse();
        const Mat2 c = conductivity * m.det * inv * inv.transpose();
        const std::size_t row = (e * nq + q) * 3;
        out(static_cast<Eigen::Index>(row)) = c(0, 0);
        out(static_cast<Eigen::Index>(row + 1)) = c(0, 1);
        out(static_cast<Eigen::Index>(row + 2)) = c(1, 1);
      }
  }
  return out;
}

/// Arc-length metric |dx/ds| at the Gauss points of every segment of an edge.
inline Eigen::VectorXd edge_metric(const StructuredMesh& mesh, const GaussRule& rule, const ReferencePatch& patch, const std::vector<Vec2>& net,
                                   Edge edge) {
  const auto nodes = mesh.edge_nodes(edge);
  const int dir = StructuredMesh::edge_direction(edge);
  const double h = dir == 0 ? mesh.h1() : mesh.h2();
  Eigen::VectorXd out(static_cast<Eigen::Index>((nodes.size() - 1) * rule.points.size()));
  for (std::size_t s = 0; s + 1 < nodes.size(); ++s)
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const double t = (static_cast<double>(s) + rule.points[q]) * h;
      const auto m = evaluate_patch(patch, net, StructuredMesh::edge_point(edge, t));
      out(static_cast<Eigen::Index>(s * rule.points.size() + q)) = m.jacobian.col(dir).norm();
    }
  return out;
}

/// Consistent load vector of a profile psi(s) along an edge with a sampled metric.
inline Eigen::VectorXd edge_load(const StructuredMesh& mesh, const GaussRule& rule, Edge edge, const std::function<double(double)>& profile,
                                 const Eigen::VectorXd& metric, int dofs_per_node = 1, int component = 0) {
  const auto nodes = mesh.edge_nodes(edge);
  const int dir = StructuredMesh::edge_direction(edge);
  const double h = dir == 0 ? mesh.h1() : mesh.h2();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.node_count() * dofs_per_node));
  for (std::size_t s = 0; s + 1 < nodes.size(); ++s)
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const double u = rule.points[q];
      const double t = (static_cast<double>(s) + u) * h;
      const double w = rule.weights[q] * h * metric(static_cast<Eigen::Index>(s * rule.points.size() + q)) * profile(t);
      f(static_cast<Eigen::Index>(nodes[s] * dofs_per_node + component)) += w * (1.0 - u);
      f(static_cast<Eigen::Index>(nodes[s + 1] * dofs_per_node + component)) += w * u;
    }
  return f;
}

}  // namespace detail

struct DiffusionOptions {
  double conductivity = 1.0;
  int quadrature = 2;
  double compression_tol = 1e-6;  // relative to the largest sampled coefficient
  std::size_t max_terms = 200;
};

/// Separated stiffness of -div(k grad u) on the mapped patch. Geometric
/// parameters must be modes of `space`; every other mode gets unit factors.
inline SeparatedOperator assemble_diffusion(const StructuredMesh& mesh, const GeometryParametrization& geometry, const ParametricSpace& space,
                                            const DiffusionOptions& opt = {}) {
  geometry.validate();
  const GaussRule rule = gauss(opt.quadrature);
  std::vector<std::size_t> modes, extents;
  const auto columns = detail::geometry_grid(geometry, space, modes, extents);
  const std::size_t rows = mesh.element_count() * rule.points.size() * rule.points.size() * 3;

  SampledTensor samples;
  samples.rows = rows;
  samples.extents = extents;
  samples.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c)
    samples.data.col(static_cast<Eigen::Index>(c)) =
        detail::metric_coefficients(mesh, rule, geometry.patch, geometry.control_net(columns[c]), opt.conductivity, columns[c]);

  const auto comp = detail::compress_or_copy(samples, opt.compression_tol, opt.max_terms);
  const auto factors = detail::compressed_factors(comp, space, modes);

  SeparatedOperator op;
  op.space = space;
  op.dofs = mesh.node_count();
  for (std::size_t t = 0; t < comp.terms(); ++t)
    op.terms.push_back({detail::diffusion_matrix(mesh, rule, comp.row_modes.col(static_cast<Eigen::Index>(t))), factors[t]});
  op.validate();
  return op;
}

/// Direct (non-separated) stiffness at fixed geometric parameters.
inline SparseMatrix assemble_diffusion_direct(const StructuredMesh& mesh, const GeometryParametrization& geometry, const Bindings& p,
                                              const DiffusionOptions& opt = {}) {
  geometry.check_range(p);
  const GaussRule rule = gauss(opt.quadrature);
  return detail::diffusion_matrix(mesh, rule, detail::metric_coefficients(mesh, rule, geometry.patch, geometry.control_net(p), opt.conductivity, p));
}

/// Load terms for a profile sum_j c_j psi_j(s) on an edge: term j carries the
/// coefficient c_j as the identity ramp over the mode `coefficient_labels[j]`,
/// times the separated edge metric. `scale` multiplies every term.
inline std::vector<LoadTerm> assemble_neumann_load(const StructuredMesh& mesh, const GeometryParametrization& geometry, Edge edge,
                                                   const InterfaceBasis& basis, const ParametricSpace& space,
                                                   const std::vector<std::string>& coefficient_labels, int dofs_per_node = 1, int component = 0,
                                                   double scale = 1.0, double compression_tol = 1e-10) {
  if (coefficient_labels.size() != basis.size) throw SchemaError("one coefficient label per basis function is required");
  const GaussRule rule = gauss(basis.quadrature_points);
  std::vector<std::size_t> modes, extents;
  const auto columns = detail::geometry_grid(geometry, space, modes, extents);
  const std::size_t rows = (mesh.edge_nodes(edge).size() - 1) * rule.points.size();
  SampledTensor samples;
  samples.rows = rows;
  samples.extents = extents;
  samples.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c)
    samples.data.col(static_cast<Eigen::Index>(c)) = detail::edge_metric(mesh, rule, geometry.patch, geometry.control_net(columns[c]), edge);
  const auto comp = detail::compress_or_copy(samples, compression_tol, 40);
  const auto factors = detail::compressed_factors(comp, space, modes);

  std::vector<LoadTerm> out;
  for (std::size_t j = 0; j < basis.size; ++j) {
    const std::size_t cm = space.index(coefficient_labels[j]);
    for (std::size_t t = 0; t < comp.terms(); ++t) {
      LoadTerm term;
      term.vector = scale * detail::edge_load(mesh, rule, edge, [&](double s) { return basis.value(j, s); },
                                              comp.row_modes.col(static_cast<Eigen::Index>(t)), dofs_per_node, component);
      term.factors = factors[t];
      term.factors[cm] = term.factors[cm].cwiseProduct(space.ramp(cm));
      term.group = coefficient_labels[j];
      out.push_back(std::move(term));
    }
  }
  return out;
}

/// Direct load vector of the profile sum_j c_j psi_j on an edge at fixed geometry.
inline Eigen::VectorXd edge_load_direct(const StructuredMesh& mesh, const GeometryParametrization& geometry, const Bindings& p, Edge edge,
                                        const InterfaceBasis& basis, const Eigen::VectorXd& coefficients, int dofs_per_node = 1,
                                        int component = 0) {
  const GaussRule rule = gauss(basis.quadrature_points);
  const auto metric = detail::edge_metric(mesh, rule, geometry.patch, geometry.control_net(p), edge);
  return detail::edge_load(
      mesh, rule, edge,
      [&](double s) {
        double v = 0.0;
        for (std::size_t j = 0; j < basis.size; ++j) v += coefficients(static_cast<Eigen::Index>(j)) * basis.value(j, s);
        return v;
      },
      metric, dofs_per_node, component);
}

/// Physical length of an edge at fixed geometry (Gauss quadrature of the metric).
inline double edge_length(const StructuredMesh& mesh, const GeometryParametrization& geometry, const Bindings& p, Edge edge) {
  const GaussRule rule = gauss(4);
  const auto metric = detail::edge_metric(mesh, rule, geometry.patch, geometry.control_net(p), edge);
  const int dir = StructuredMesh::edge_direction(edge);
  const double h = dir == 0 ? mesh.h1() : mesh.h2();
  double len = 0.0;
  for (Eigen::Index i = 0; i < metric.size(); ++i) len += rule.weights[static_cast<std::size_t>(i) % rule.points.size()] * h * metric(i);
  return len;
}

// ---------------------------------------------------------------------------
// Plates: unknowns (w, theta_x, theta_y) per node with u = z theta_y, v = -z theta_x.

struct PlateLabels {
  std::string thickness = "h";
  std::string young = "E";
  std::string poisson = "nu";
};

struct PlateOptions {
  double shear_correction = 5.0 / 6.0;
};

/// Side lengths of an axis-aligned rectangular geometry; throws otherwise.
inline Vec2 rectangle_dimensions(const GeometryParametrization& g) {
  if (!g.parameters.empty()) throw GeometryError("plate modules need fixed rectangular geometry");
  const Bindings none;
  const auto net = g.control_net(none);
  const Vec2 o = evaluate_patch(g.patch, net, {0, 0}).point;
  const Vec2 c = evaluate_patch(g.patch, net, {1, 1}).point;
  const Vec2 d = c - o;
  for (double s : {0.0, 0.25, 0.5, 0.75, 1.0})
    for (double t : {0.0, 0.3, 0.7, 1.0}) {
      const Vec2 x = evaluate_patch(g.patch, net, {s, t}).point;
      if ((x - (o + Vec2(d.x() * s, d.y() * t))).norm() > 1e-12 * d.norm())
        throw GeometryError("plate kernel only accepts axis-aligned rectangles");
    }
  if (!(d.x() > 0 && d.y() > 0)) throw GeometryError("plate rectangle must be positively oriented");
  return d;
}

namespace detail {

/// Plate element matrices on an a_e x b_e rectangle: bending with constitutive
/// matrix `db` (2x2 Gauss) or transverse shear (1-point, selective reduced).
inline Eigen::Matrix<double, 12, 12> plate_bending_element(double ae, double be, const Eigen::Matrix3d& db) {
  Eigen::Matrix<double, 12, 12> k = Eigen::Matrix<double, 12, 12>::Zero();
  const auto rule = gauss(2);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t a = 0; a < 2; ++a) {
      const auto s = quad_shape(rule.points[a], rule.points[b], ae, be);
      Eigen::Matrix<double, 3, 12> bm = Eigen::Matrix<double, 3, 12>::Zero();
      for (int n = 0; n < 4; ++n) {
        const double dx = s.grad[n].x(), dy = s.grad[n].y();
        bm(0, 3 * n + 2) = dx;   // d theta_y / dx
        bm(1, 3 * n + 1) = -dy;  // -d theta_x / dy
        bm(2, 3 * n + 2) = dy;
        bm(2, 3 * n + 1) = -dx;
      }
      k += rule.weights[a] * rule.weights[b] * ae * be * bm.transpose() * db * bm;
    }
  return k;
}

inline Eigen::Matrix<double, 12, 12> plate_shear_element(double ae, double be) {
  const auto s = quad_shape(0.5, 0.5, ae, be);
  Eigen::Matrix<double, 2, 12> bs = Eigen::Matrix<double, 2, 12>::Zero();
  for (int n = 0; n < 4; ++n) {
    bs(0, 3 * n + 0) = s.grad[n].x();  // dw/dx + theta_y
    bs(0, 3 * n + 2) = s.n[n];
    bs(1, 3 * n + 0) = s.grad[n].y();  // dw/dy - theta_x
    bs(1, 3 * n + 1) = -s.n[n];
  }
  return ae * be * bs.transpose() * bs;
}

inline SparseMatrix plate_matrix(const StructuredMesh& mesh, const Eigen::Matrix<double, 12, 12>& ke) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.element_count() * 144);
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const auto nodes = mesh.element_nodes(e);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        trip.emplace_back(static_cast<int>(3 * nodes[i / 3] + i % 3), static_cast<int>(3 * nodes[j / 3] + j % 3), ke(i, j));
  }
  SparseMatrix k(static_cast<Eigen::Index>(3 * mesh.node_count()), static_cast<Eigen::Index>(3 * mesh.node_count()));
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

}  // namespace detail

/// Separated FSDT stiffness: three terms
///   E h^3 / (12 (1 - nu^2)) K_b0 + E h^3 nu / (12 (1 - nu^2)) K_b1 + E h / (2 (1 + nu)) kappa K_s.
inline SeparatedOperator assemble_plate(const StructuredMesh& mesh, const GeometryParametrization& geometry, const ParametricSpace& space,
                                        const PlateLabels& labels = {}, const PlateOptions& opt = {}) {
  const Vec2 dims = rectangle_dimensions(geometry);
  const double ae = dims.x() * mesh.h1(), be = dims.y() * mesh.h2();
  Eigen::Matrix3d b0 = Eigen::Matrix3d::Zero(), b1 = Eigen::Matrix3d::Zero();
  b0(0, 0) = b0(1, 1) = 1.0;
  b0(2, 2) = 0.5;
  b1(0, 1) = b1(1, 0) = 1.0;
  b1(2, 2) = -0.5;

  const std::size_t kh = space.index(labels.thickness), ke = space.index(labels.young), kn = space.index(labels.poisson);
  const Eigen::VectorXd h = space.ramp(kh), e = space.ramp(ke), nu = space.ramp(kn);
  auto factors = [&](const Eigen::VectorXd& fh, const Eigen::VectorXd& fnu) {
    auto f = space.all_ones();
    f[kh] = fh;
    f[ke] = e;
    f[kn] = fnu;
    return f;
  };
  const Eigen::VectorXd h3 = h.array().cube();
  const Eigen::ArrayXd denom = 12.0 * (1.0 - nu.array().square());

  SeparatedOperator op;
  op.space = space;
  op.dofs = 3 * mesh.node_count();
  op.terms.push_back({detail::plate_matrix(mesh, detail::plate_bending_element(ae, be, b0)), factors(h3, (1.0 / denom).matrix())});
  op.terms.push_back({detail::plate_matrix(mesh, detail::plate_bending_element(ae, be, b1)), factors(h3, (nu.array() / denom).matrix())});
  op.terms.push_back({opt.shear_correction * detail::plate_matrix(mesh, detail::plate_shear_element(ae, be)),
                      factors(h, (0.5 / (1.0 + nu.array())).matrix())});
  op.validate();
  return op;
}

/// FSDT stiffness at fixed thickness, modulus and Poisson ratio.
inline SparseMatrix assemble_plate_direct(const StructuredMesh& mesh, const GeometryParametrization& geometry, double h, double young, double nu,
                                          const PlateOptions& opt = {}) {
  if (!(h > 0.0) || !(young > 0.0) || !(nu > -1.0 && nu < 0.5)) throw RangeError("plate material out of range");
  const Vec2 dims = rectangle_dimensions(geometry);
  const double ae = dims.x() * mesh.h1(), be = dims.y() * mesh.h2();
  const double d = young * h * h * h / (12.0 * (1.0 - nu * nu));
  Eigen::Matrix3d db = Eigen::Matrix3d::Zero();
  db(0, 0) = db(1, 1) = d;
  db(0, 1) = db(1, 0) = d * nu;
  db(2, 2) = 0.5 * d * (1.0 - nu);
  const double g = young / (2.0 * (1.0 + nu));
  return detail::plate_matrix(mesh, detail::plate_bending_element(ae, be, db) + opt.shear_correction * g * h * detail::plate_shear_element(ae, be));
}

/// Node indices -> DOF indices for `dofs_per_node` unknowns per node.
inline std::vector<std::size_t> node_dofs(const std::vector<std::size_t>& nodes, int dofs_per_node) {
  std::vector<std::size_t> out;
  for (auto n : nodes)
    for (int c = 0; c < dofs_per_node; ++c) out.push_back(n * dofs_per_node + c);
  return out;
}

}  // namespace mpgd
