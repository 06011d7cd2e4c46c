#pragma once

// NURBS patches mapping the reference square onto parametric physical
// modules, plus rigid placements used to replicate a reference module.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mpgd/errors.hpp"
#include "mpgd/separated.hpp"

namespace mpgd {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Tensor-product NURBS basis on [0,1]^2. Control point (i, j) has index i + n1 * j.
struct ReferencePatch {
  std::array<int, 2> degree{1, 1};
  std::array<std::vector<double>, 2> knots{std::vector<double>{0, 0, 1, 1}, std::vector<double>{0, 0, 1, 1}};
  std::vector<double> weights{1, 1, 1, 1};

  std::size_t count(int dir) const {
    return knots[dir].size() - static_cast<std::size_t>(degree[dir]) - 1;
  }
  std::size_t control_count() const { return count(0) * count(1); }

  void validate() const {
    for (int d = 0; d < 2; ++d) {
      const auto& k = knots[d];
      const int p = degree[d];
      if (p < 1) throw SchemaError("patch degree must be at least 1");
      if (k.size() < static_cast<std::size_t>(2 * p + 2)) throw SchemaError("knot vector too short for its degree");
      for (std::size_t i = 1; i < k.size(); ++i)
        if (k[i] < k[i - 1]) throw SchemaError("knot vector is not non-decreasing");
      for (int i = 0; i <= p; ++i)
        if (k[i] != 0.0 || k[k.size() - 1 - i] != 1.0) throw SchemaError("knot vectors must be open on [0, 1]");
    }
    if (weights.size() != control_count()) throw SchemaError("weight count differs from n1 * n2");
    for (double w : weights)
      if (!(w > 0.0)) throw SchemaError("NURBS weights must be positive");
  }
};

namespace bspline {

inline std::size_t find_span(const std::vector<double>& knots, int degree, double u) {
  const std::size_t n = knots.size() - static_cast<std::size_t>(degree) - 2;
  if (u >= knots[n + 1]) return n;
  std::size_t lo = static_cast<std::size_t>(degree), hi = n + 1;
  std::size_t mid = (lo + hi) / 2;
  while (u < knots[mid] || u >= knots[mid + 1]) {
    if (u < knots[mid]) hi = mid;
    else lo = mid;
    mid = (lo + hi) / 2;
  }
  return mid;
}

/// Non-zero basis functions and first derivatives at u: rows 0 (values) and 1 (d/du).
inline Eigen::Matrix<double, 2, Eigen::Dynamic> basis_with_derivative(const std::vector<double>& knots, int p, std::size_t span,
                                                                        double u) {
  Eigen::MatrixXd ndu(p + 1, p + 1);
  std::vector<double> left(p + 1), right(p + 1);
  ndu(0, 0) = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = u - knots[span + 1 - j];
    right[j] = knots[span + j] - u;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      ndu(j, r) = right[r + 1] + left[j - r];
      const double tmp = ndu(r, j - 1) / ndu(j, r);
      ndu(r, j) = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    ndu(j, j) = saved;
  }
  Eigen::Matrix<double, 2, Eigen::Dynamic> out(2, p + 1);
  for (int j = 0; j <= p; ++j) out(0, j) = ndu(j, p);
  for (int r = 0; r <= p; ++r) {
    double d = 0.0;
    if (r >= 1) d += ndu(r - 1, p - 1) / ndu(p, r - 1);
    if (r <= p - 1) d -= ndu(r, p - 1) / ndu(p, r);
    out(1, r) = p * d;
  }
  return out;
}

}  // namespace bspline

/// Affine function of named parameters: value = constant + sum_k terms[k] * p_k.
struct AffineVec2 {
  Vec2 constant = Vec2::Zero();
  std::map<std::string, Vec2> terms;

  Vec2 eval(const Bindings& p) const {
    Vec2 v = constant;
    for (const auto& [name, coeff] : terms) {
      auto it = p.find(name);
      if (it == p.end()) throw SchemaError("no value for geometric parameter '" + name + "'");
      v += coeff * it->second;
    }
    return v;
  }
};

struct ParameterRange {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
};

/// A patch whose control points depend affinely on geometric parameters (metres).
struct GeometryParametrization {
  ReferencePatch patch;
  std::vector<AffineVec2> control_points;
  std::vector<ParameterRange> parameters;

  void validate() const {
    patch.validate();
    if (control_points.size() != patch.control_count()) throw SchemaError("control net size differs from the patch layout");
    for (const auto& cp : control_points)
      for (const auto& [name, v] : cp.terms) {
        bool found = false;
        for (const auto& p : parameters) found = found || p.name == name;
        if (!found) throw SchemaError("control point refers to undeclared parameter '" + name + "'");
      }
  }

  void check_range(const Bindings& p) const {
    for (const auto& r : parameters) {
      auto it = p.find(r.name);
      if (it == p.end()) throw SchemaError("missing geometric parameter '" + r.name + "'");
      const double slack = 1e-12 * std::max(1.0, r.upper - r.lower);
      if (it->second < r.lower - slack || it->second > r.upper + slack)
        throw RangeError("geometric parameter '" + r.name + "' = " + std::to_string(it->second) + " outside [" +
                         std::to_string(r.lower) + ", " + std::to_string(r.upper) + "]");
    }
  }

  std::vector<Vec2> control_net(const Bindings& p) const {
    std::vector<Vec2> net;
    net.reserve(control_points.size());
    for (const auto& cp : control_points) net.push_back(cp.eval(p));
    return net;
  }
};

/// Point, derivatives and Jacobian of a mapped patch at one reference location.
struct MapEvaluation {
  Vec2 point;
  Mat2 jacobian;  // jacobian(a, b) = d x_a / d xi_b
  double det = 0.0;
};

inline void check_unit_square(const Vec2& xi) {
  constexpr double slack = 1e-14;
  if (!(xi.x() >= -slack && xi.x() <= 1.0 + slack && xi.y() >= -slack && xi.y() <= 1.0 + slack)) {
    std::ostringstream os;
    os << "reference point (" << xi.x() << ", " << xi.y() << ") outside the unit square";
    throw RangeError(os.str());
  }
}

/// Rational evaluation with an explicit control net (no range checks on parameters).
inline MapEvaluation evaluate_patch(const ReferencePatch& patch, const std::vector<Vec2>& net, Vec2 xi) {
  check_unit_square(xi);
  xi = xi.cwiseMax(0.0).cwiseMin(1.0);
  const int p1 = patch.degree[0], p2 = patch.degree[1];
  const std::size_t n1 = patch.count(0);
  const std::size_t s1 = bspline::find_span(patch.knots[0], p1, xi.x());
  const std::size_t s2 = bspline::find_span(patch.knots[1], p2, xi.y());
  const auto b1 = bspline::basis_with_derivative(patch.knots[0], p1, s1, xi.x());
  const auto b2 = bspline::basis_with_derivative(patch.knots[1], p2, s2, xi.y());

  double w = 0.0, w1 = 0.0, w2 = 0.0;
  Vec2 a = Vec2::Zero(), a1 = Vec2::Zero(), a2 = Vec2::Zero();
  for (int j = 0; j <= p2; ++j) {
    for (int i = 0; i <= p1; ++i) {
      const std::size_t ci = s1 - p1 + i;
      const std::size_t cj = s2 - p2 + j;
      const std::size_t idx = ci + n1 * cj;
      const double wt = patch.weights[idx];
      const double n = b1(0, i) * b2(0, j) * wt;
      const double d1 = b1(1, i) * b2(0, j) * wt;
      const double d2 = b1(0, i) * b2(1, j) * wt;
      w += n;
      w1 += d1;
      w2 += d2;
      a += n * net[idx];
      a1 += d1 * net[idx];
      a2 += d2 * net[idx];
    }
  }
  MapEvaluation e;
  e.point = a / w;
  e.jacobian.col(0) = (a1 * w - a * w1) / (w * w);
  e.jacobian.col(1) = (a2 * w - a * w2) / (w * w);
  e.det = e.jacobian.determinant();
  return e;
}

inline Vec2 map(const GeometryParametrization& g, const Bindings& p, const Vec2& xi) {
  g.check_range(p);
  return evaluate_patch(g.patch, g.control_net(p), xi).point;
}

inline std::string describe(const Vec2& xi, const Bindings& p) {
  std::ostringstream os;
  os << "xi = (" << xi.x() << ", " << xi.y() << "), p = {";
  bool first = true;
  for (const auto& [k, v] : p) {
    os << (first ? "" : ", ") << k << ": " << v;
    first = false;
  }
  os << "}";
  return os.str();
}

inline MapEvaluation checked_jacobian(const ReferencePatch& patch, const std::vector<Vec2>& net, const Vec2& xi, const Bindings& p) {
  auto e = evaluate_patch(patch, net, xi);
  if (!(e.det > 0.0)) throw GeometryError("degenerate geometry (det J = " + std::to_string(e.det) + ") at " + describe(xi, p));
  return e;
}

inline MapEvaluation jacobian(const GeometryParametrization& g, const Bindings& p, const Vec2& xi) {
  g.check_range(p);
  return checked_jacobian(g.patch, g.control_net(p), xi, p);
}

/// Rigid placement: optional reflection y -> -y, then rotation by angle, then translation.
struct Placement {
  double angle = 0.0;
  Vec2 translation = Vec2::Zero();
  bool reflect = false;

  Mat2 matrix() const {
    Mat2 r;
    r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
    Mat2 s = Mat2::Identity();
    if (reflect) s(1, 1) = -1.0;
    return r * s;
  }
};

inline Vec2 place(const Vec2& x, const Placement& placement) { return placement.matrix() * x + placement.translation; }

namespace patches {

inline std::vector<double> open_knots(int degree) {
  std::vector<double> k(2 * (degree + 1), 0.0);
  for (int i = 0; i <= degree; ++i) k[degree + 1 + i] = 1.0;
  return k;
}

/// Degree-1 patch with a 2x2 net.
inline ReferencePatch bilinear() { return ReferencePatch{}; }

/// Single-element quadratic patch with a 3x3 net and the given weights.
inline ReferencePatch biquadratic(std::vector<double> weights = std::vector<double>(9, 1.0)) {
  ReferencePatch p;
  p.degree = {2, 2};
  p.knots = {open_knots(2), open_knots(2)};
  p.weights = std::move(weights);
  return p;
}

inline AffineVec2 fixed(double x, double y) { return AffineVec2{Vec2(x, y), {}}; }

/// Axis-aligned rectangle [0, a] x [0, b] with fixed dimensions.
inline GeometryParametrization rectangle(double a, double b) {
  GeometryParametrization g;
  g.patch = bilinear();
  g.control_points = {fixed(0, 0), fixed(a, 0), fixed(0, b), fixed(a, b)};
  return g;
}

/// Square [0, L] x [0, L] whose side L is a geometric parameter.
inline GeometryParametrization parametric_square(const std::string& name, double lo, double hi) {
  GeometryParametrization g;
  g.patch = bilinear();
  g.control_points = {fixed(0, 0), AffineVec2{Vec2::Zero(), {{name, Vec2(1, 0)}}}, AffineVec2{Vec2::Zero(), {{name, Vec2(0, 1)}}},
                      AffineVec2{Vec2::Zero(), {{name, Vec2(1, 1)}}}};
  g.parameters = {{name, lo, hi}};
  return g;
}

/// Quarter annulus with xi_1 radial (inner -> outer) and xi_2 angular (0 -> pi/2).
/// Outer radius is inner + width_0 along x and inner + width_1 along y; equal
/// widths give a circular annulus. Parameters: inner radius and both widths.
inline GeometryParametrization tapered_annulus(const std::string& inner, const std::string& width0, const std::string& width1,
                                               std::array<double, 2> inner_range, std::array<double, 2> width_range) {
  const double c = std::sqrt(0.5);
  GeometryParametrization g;
  g.patch = biquadratic({1, 1, 1, c, c, c, 1, 1, 1});
  auto cp = [&](double fi, int j) {
    // fi: radial fraction of the width at this row (0, 0.5, 1); j: angular index.
    AffineVec2 v;
    const Vec2 dir = j == 0 ? Vec2(1, 0) : (j == 1 ? Vec2(1, 1) : Vec2(0, 1));
    v.terms[inner] = dir;
    if (fi > 0.0) {
      if (j == 0) v.terms[width0] = Vec2(fi, 0);
      if (j == 1) {
        v.terms[width0] = Vec2(fi, 0);
        v.terms[width1] = Vec2(0, fi);
      }
      if (j == 2) v.terms[width1] = Vec2(0, fi);
    }
    return v;
  };
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) g.control_points.push_back(cp(0.5 * i, j));
  g.parameters = {{inner, inner_range[0], inner_range[1]}, {width0, width_range[0], width_range[1]},
                  {width1, width_range[0], width_range[1]}};
  return g;
}

/// Circular quarter annulus with parametric inner radius and width.
inline GeometryParametrization quarter_annulus(const std::string& inner, const std::string& width, std::array<double, 2> inner_range,
                                               std::array<double, 2> width_range) {
  const double c = std::sqrt(0.5);
  GeometryParametrization g;
  g.patch = biquadratic({1, 1, 1, c, c, c, 1, 1, 1});
  for (int j = 0; j < 3; ++j) {
    const Vec2 dir = j == 0 ? Vec2(1, 0) : (j == 1 ? Vec2(1, 1) : Vec2(0, 1));
    for (int i = 0; i < 3; ++i) {
      AffineVec2 v;
      v.terms[inner] = dir;
      if (i > 0) v.terms[width] = 0.5 * i * dir;
      g.control_points.push_back(v);
    }
  }
  g.parameters = {{inner, inner_range[0], inner_range[1]}, {width, width_range[0], width_range[1]}};
  return g;
}

/// Straight channel segment in its local frame: flow along x from 0 to `length`,
/// inner wall on y = 0, inlet width `width_in` at x = 0 and outlet width
/// `width_out` at x = length. Quadratic patch, xi_1 along the flow.
inline GeometryParametrization tapered_channel(const std::string& width_out, const std::string& length, const std::string& width_in,
                                               std::array<double, 2> range) {
  GeometryParametrization g;
  g.patch = biquadratic();
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 3; ++i) {
      const double fx = 0.5 * i;  // fraction of the length
      const double fy = 0.5 * j;  // fraction of the local width
      AffineVec2 v;
      if (fx > 0.0) v.terms[length] = Vec2(fx, 0);
      if (fy > 0.0 && fx < 1.0) v.terms[width_in] = Vec2(0, fy * (1.0 - fx));
      if (fy > 0.0 && fx > 0.0) v.terms[width_out] = Vec2(0, fy * fx);
      g.control_points.push_back(v);
    }
  }
  g.parameters = {{width_out, range[0], range[1]}, {length, range[0], range[1]}, {width_in, range[0], range[1]}};
  return g;
}

}  // namespace patches
}  // namespace mpgd
