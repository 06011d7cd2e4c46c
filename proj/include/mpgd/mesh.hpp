#pragma once

// Structured bilinear-quadrilateral meshes of the reference square.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mpgd/errors.hpp"

namespace mpgd {

enum class Edge { left, right, bottom, top };

inline std::string to_string(Edge e) {
  switch (e) {
    case Edge::left: return "left";
    case Edge::right: return "right";
    case Edge::bottom: return "bottom";
    case Edge::top: return "top";
  }
  return "?";
}

inline Edge edge_from_string(const std::string& s) {
  if (s == "left") return Edge::left;
  if (s == "right") return Edge::right;
  if (s == "bottom") return Edge::bottom;
  if (s == "top") return Edge::top;
  throw SchemaError("unknown edge '" + s + "'");
}

/// Gauss-Legendre rule mapped to [0, 1].
struct GaussRule {
  std::vector<double> points;
  std::vector<double> weights;
};

inline GaussRule gauss(int n) {
  GaussRule g;
  switch (n) {
    case 1: g.points = {0.0}; g.weights = {2.0}; break;
    case 2: {
      const double a = 1.0 / std::sqrt(3.0);
      g.points = {-a, a};
      g.weights = {1.0, 1.0};
      break;
    }
    case 3: {
      const double a = std::sqrt(0.6);
      g.points = {-a, 0.0, a};
      g.weights = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
      break;
    }
    case 4: {
      const double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
      const double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
      const double wa = (18.0 + std::sqrt(30.0)) / 36.0;
      const double wb = (18.0 - std::sqrt(30.0)) / 36.0;
      g.points = {-b, -a, a, b};
      g.weights = {wb, wa, wa, wb};
      break;
    }
    default: throw SchemaError("Gauss rules are available for 1 to 4 points");
  }
  for (auto& p : g.points) p = 0.5 * (p + 1.0);
  for (auto& w : g.weights) w *= 0.5;
  return g;
}

/// n1 x n2 nodes on [0,1]^2; node (i, j) has index i + n1 * j, element (e1, e2)
/// has index e1 + (n1 - 1) * e2 and local nodes ordered counter-clockwise.
struct StructuredMesh {
  std::size_t n1 = 2;
  std::size_t n2 = 2;

  StructuredMesh() = default;
  StructuredMesh(std::size_t a, std::size_t b) : n1(a), n2(b) {
    if (n1 < 2 || n2 < 2) throw SchemaError("meshes need at least two nodes per direction");
  }

  std::size_t node_count() const { return n1 * n2; }
  std::size_t element_count() const { return (n1 - 1) * (n2 - 1); }
  std::size_t node(std::size_t i, std::size_t j) const { return i + n1 * j; }
  double h1() const { return 1.0 / static_cast<double>(n1 - 1); }
  double h2() const { return 1.0 / static_cast<double>(n2 - 1); }

  Eigen::Vector2d xi(std::size_t node) const {
    return {static_cast<double>(node % n1) * h1(), static_cast<double>(node / n1) * h2()};
  }

  std::array<std::size_t, 4> element_nodes(std::size_t e) const {
    const std::size_t e1 = e % (n1 - 1), e2 = e / (n1 - 1);
    return {node(e1, e2), node(e1 + 1, e2), node(e1 + 1, e2 + 1), node(e1, e2 + 1)};
  }

  /// Lower-left reference corner of an element.
  Eigen::Vector2d element_origin(std::size_t e) const {
    const std::size_t e1 = e % (n1 - 1), e2 = e / (n1 - 1);
    return {static_cast<double>(e1) * h1(), static_cast<double>(e2) * h2()};
  }

  /// Nodes on an edge ordered by increasing reference coordinate along it.
  std::vector<std::size_t> edge_nodes(Edge edge) const {
    std::vector<std::size_t> out;
    switch (edge) {
      case Edge::left: for (std::size_t j = 0; j < n2; ++j) out.push_back(node(0, j)); break;
      case Edge::right: for (std::size_t j = 0; j < n2; ++j) out.push_back(node(n1 - 1, j)); break;
      case Edge::bottom: for (std::size_t i = 0; i < n1; ++i) out.push_back(node(i, 0)); break;
      case Edge::top: for (std::size_t i = 0; i < n1; ++i) out.push_back(node(i, n2 - 1)); break;
    }
    return out;
  }

  /// Reference point on an edge at its local coordinate s in [0, 1].
  static Eigen::Vector2d edge_point(Edge edge, double s) {
    switch (edge) {
      case Edge::left: return {0.0, s};
      case Edge::right: return {1.0, s};
      case Edge::bottom: return {s, 0.0};
      case Edge::top: return {s, 1.0};
    }
    return {0.0, 0.0};
  }

  /// Unit tangent direction index of an edge in the reference square (0: xi_1, 1: xi_2).
  static int edge_direction(Edge edge) { return (edge == Edge::left || edge == Edge::right) ? 1 : 0; }
};

/// Bilinear shape functions and reference-coordinate gradients on one element.
struct QuadShape {
  std::array<double, 4> n{};
  std::array<Eigen::Vector2d, 4> grad{};
};

/// Shape data at local coordinates (u, v) in [0,1]^2 of an element of size h1 x h2.
inline QuadShape quad_shape(double u, double v, double h1, double h2) {
  QuadShape s;
  s.n = {(1 - u) * (1 - v), u * (1 - v), u * v, (1 - u) * v};
  s.grad[0] = {-(1 - v) / h1, -(1 - u) / h2};
  s.grad[1] = {(1 - v) / h1, -u / h2};
  s.grad[2] = {v / h1, u / h2};
  s.grad[3] = {-v / h1, (1 - u) / h2};
  return s;
}

/// Bilinear interpolation of a nodal field at a reference point.
inline double interpolate_nodal(const StructuredMesh& mesh, const Eigen::VectorXd& values, const Eigen::Vector2d& xi, int dofs_per_node = 1,
                                int component = 0) {
  if (xi.x() < 0 || xi.x() > 1 || xi.y() < 0 || xi.y() > 1) throw RangeError("reference point outside the unit square");
  const double f1 = xi.x() / mesh.h1(), f2 = xi.y() / mesh.h2();
  const std::size_t e1 = std::min(static_cast<std::size_t>(f1), mesh.n1 - 2);
  const std::size_t e2 = std::min(static_cast<std::size_t>(f2), mesh.n2 - 2);
  const std::size_t e = e1 + (mesh.n1 - 1) * e2;
  const auto s = quad_shape(f1 - static_cast<double>(e1), f2 - static_cast<double>(e2), mesh.h1(), mesh.h2());
  const auto nodes = mesh.element_nodes(e);
  double out = 0.0;
  for (int a = 0; a < 4; ++a) out += s.n[a] * values(static_cast<Eigen::Index>(nodes[a] * dofs_per_node + component));
  return out;
}

}  // namespace mpgd
