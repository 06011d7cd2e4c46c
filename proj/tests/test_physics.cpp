#include <gtest/gtest.h>

#include <Eigen/SparseCholesky>

#include <numbers>
#include <random>

#include "mpgd/cp_compress.hpp"
#include "mpgd/pgd.hpp"
#include "mpgd/physics.hpp"

using namespace mpgd;

namespace {

ParametricSpace space_of(std::vector<std::pair<std::string, std::vector<double>>> modes) {
  ParametricSpace s;
  for (auto& [l, g] : modes) {
    s.labels.push_back(l);
    s.grids.push_back(g);
  }
  return s;
}

/// Textbook bilinear Laplacian on a uniform n x n grid of [0,1]^2.
SparseMatrix textbook_laplacian(std::size_t n) {
  Eigen::Matrix4d ke;
  ke << 4, -1, -2, -1, -1, 4, -1, -2, -2, -1, 4, -1, -1, -2, -1, 4;
  ke /= 6.0;
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t j = 0; j + 1 < n; ++j)
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::array<std::size_t, 4> nd{i + n * j, i + 1 + n * j, i + 1 + n * (j + 1), i + n * (j + 1)};
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) trip.emplace_back(static_cast<int>(nd[a]), static_cast<int>(nd[b]), ke(a, b));
    }
  SparseMatrix k(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(n * n));
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

/// Stiffness assembled with Gauss points placed in physical coordinates of the square [0, L]^2.
SparseMatrix physical_square_stiffness(std::size_t n, double side) {
  const double h = side / static_cast<double>(n - 1);
  const auto g = gauss(2);
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t j = 0; j + 1 < n; ++j)
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::array<std::size_t, 4> nd{i + n * j, i + 1 + n * j, i + 1 + n * (j + 1), i + n * (j + 1)};
      const std::array<Vec2, 4> corner{Vec2(0, 0), Vec2(h, 0), Vec2(h, h), Vec2(0, h)};
      Eigen::Matrix4d ke = Eigen::Matrix4d::Zero();
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t a = 0; a < 2; ++a) {
          const double x = g.points[a] * h, y = g.points[b] * h;
          std::array<Vec2, 4> grad;
          for (int c = 0; c < 4; ++c) {
            const double sx = corner[c].x() > 0 ? 1.0 : -1.0, sy = corner[c].y() > 0 ? 1.0 : -1.0;
            const double fx = corner[c].x() > 0 ? x / h : 1.0 - x / h;
            const double fy = corner[c].y() > 0 ? y / h : 1.0 - y / h;
            grad[c] = Vec2(sx / h * fy, sy / h * fx);
          }
          for (int p = 0; p < 4; ++p)
            for (int q = 0; q < 4; ++q) ke(p, q) += g.weights[a] * g.weights[b] * h * h * grad[p].dot(grad[q]);
        }
      for (int p = 0; p < 4; ++p)
        for (int q = 0; q < 4; ++q) trip.emplace_back(static_cast<int>(nd[p]), static_cast<int>(nd[q]), ke(p, q));
    }
  SparseMatrix k(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(n * n));
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

/// FSDT stiffness written directly with full constitutive matrices on an a x b rectangle.
SparseMatrix direct_plate(std::size_t n1, std::size_t n2, double a, double b, double h, double e, double nu) {
  const double ae = a / static_cast<double>(n1 - 1), be = b / static_cast<double>(n2 - 1);
  Eigen::Matrix3d db;
  db << 1, nu, 0, nu, 1, 0, 0, 0, (1 - nu) / 2;
  db *= e * h * h * h / (12 * (1 - nu * nu));
  const double ds = 5.0 / 6.0 * e / (2 * (1 + nu)) * h;
  auto shape = [&](double x, double y) {
    // Values and physical gradients of the 4 bilinear functions at (x, y) in [0,ae]x[0,be].
    const double u = x / ae, v = y / be;
    Eigen::Vector4d n{(1 - u) * (1 - v), u * (1 - v), u * v, (1 - u) * v};
    Eigen::Matrix<double, 2, 4> d;
    d << -(1 - v) / ae, (1 - v) / ae, v / ae, -v / ae, -(1 - u) / be, -u / be, u / be, (1 - u) / be;
    return std::pair{n, d};
  };
  Eigen::Matrix<double, 12, 12> ke = Eigen::Matrix<double, 12, 12>::Zero();
  const auto g = gauss(2);
  for (std::size_t q = 0; q < 2; ++q)
    for (std::size_t p = 0; p < 2; ++p) {
      auto [n, d] = shape(g.points[p] * ae, g.points[q] * be);
      Eigen::Matrix<double, 3, 12> bb = Eigen::Matrix<double, 3, 12>::Zero();
      for (int c = 0; c < 4; ++c) {
        // kappa_x = d theta_y/dx, kappa_y = -d theta_x/dy, kappa_xy = d theta_y/dy - d theta_x/dx
        bb(0, 3 * c + 2) = d(0, c);
        bb(1, 3 * c + 1) = -d(1, c);
        bb(2, 3 * c + 2) = d(1, c);
        bb(2, 3 * c + 1) = -d(0, c);
      }
      ke += g.weights[p] * g.weights[q] * ae * be * bb.transpose() * db * bb;
    }
  {
    auto [n, d] = shape(ae / 2, be / 2);
    Eigen::Matrix<double, 2, 12> bs = Eigen::Matrix<double, 2, 12>::Zero();
    for (int c = 0; c < 4; ++c) {
      bs(0, 3 * c) = d(0, c);
      bs(0, 3 * c + 2) = n(c);
      bs(1, 3 * c) = d(1, c);
      bs(1, 3 * c + 1) = -n(c);
    }
    ke += ae * be * ds * bs.transpose() * bs;
  }
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t j = 0; j + 1 < n2; ++j)
    for (std::size_t i = 0; i + 1 < n1; ++i) {
      const std::array<std::size_t, 4> nd{i + n1 * j, i + 1 + n1 * j, i + 1 + n1 * (j + 1), i + n1 * (j + 1)};
      for (int p = 0; p < 12; ++p)
        for (int q = 0; q < 12; ++q)
          trip.emplace_back(static_cast<int>(3 * nd[p / 3] + p % 3), static_cast<int>(3 * nd[q / 3] + q % 3), ke(p, q));
    }
  SparseMatrix k(static_cast<Eigen::Index>(3 * n1 * n2), static_cast<Eigen::Index>(3 * n1 * n2));
  k.setFromTriplets(trip.begin(), trip.end());
  return k;
}

double rel_frobenius(const SparseMatrix& a, const SparseMatrix& b) { return SparseMatrix(a - b).norm() / b.norm(); }

ParametricSpace plate_space() {
  return space_of({{"h", geometric_grid(0.001, 0.01, 11)}, {"E", uniform_grid(100e9, 300e9, 11)}, {"nu", uniform_grid(0.2, 0.4, 11)}});
}

}  // namespace

TEST(Diffusion, IdentityGeometryIsLaplacian) {
  const StructuredMesh mesh(6, 6);
  const auto op = assemble_diffusion(mesh, patches::rectangle(1, 1), space_of({{"q", uniform_grid(0, 1, 3)}}));
  ASSERT_EQ(op.terms.size(), 1u);
  for (const auto& f : op.terms[0].factors) EXPECT_EQ(f, Eigen::VectorXd::Ones(3));
  EXPECT_LT(rel_frobenius(op.terms[0].matrix, textbook_laplacian(6)), 1e-14);
}

TEST(Diffusion, ParametricSquareMatchesPhysicalAssembly) {
  const StructuredMesh mesh(9, 9);
  const auto geo = patches::parametric_square("L", 1.0, 3.0);
  const auto op = assemble_diffusion(mesh, geo, space_of({{"L", uniform_grid(1, 3, 11)}}));
  const std::vector<double> at{2.0};
  EXPECT_LT(rel_frobenius(op.particularize(at), physical_square_stiffness(9, 2.0)), 1e-8);
  EXPECT_LT(rel_frobenius(assemble_diffusion_direct(mesh, geo, {{"L", 2.0}}), physical_square_stiffness(9, 2.0)), 1e-12);
}

TEST(Diffusion, ParticularizedOperatorIsSymmetricDefinite) {
  const StructuredMesh mesh(7, 7);
  const auto geo = patches::quarter_annulus("r", "w", {1, 3}, {1, 3});
  const auto op = assemble_diffusion(mesh, geo, space_of({{"r", uniform_grid(1, 3, 5)}, {"w", uniform_grid(1, 3, 5)}}), {.quadrature = 3});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(1.0, 3.0);
  for (int i = 0; i < 5; ++i) {
    const std::vector<double> at{u(rng), u(rng)};
    const SparseMatrix k = op.particularize(at);
    EXPECT_LT(SparseMatrix(k - SparseMatrix(k.transpose())).norm(), 1e-12 * k.norm());
    const Eigen::VectorXd rows = k * Eigen::VectorXd::Ones(k.cols());
    EXPECT_LT(rows.cwiseAbs().maxCoeff(), 1e-10 * k.norm());
    // Drop the inner-arc DOFs and check the Cholesky factorization succeeds.
    const auto fixed = mesh.edge_nodes(Edge::left);
    const Eigen::VectorXd lift = Eigen::VectorXd::Zero(k.rows());
    Eigen::MatrixXd dense(k);
    std::vector<int> keep;
    for (int n = 0; n < k.rows(); ++n)
      if (std::find(fixed.begin(), fixed.end(), static_cast<std::size_t>(n)) == fixed.end()) keep.push_back(n);
    Eigen::MatrixXd red(keep.size(), keep.size());
    for (std::size_t a = 0; a < keep.size(); ++a)
      for (std::size_t b = 0; b < keep.size(); ++b) red(a, b) = dense(keep[a], keep[b]);
    EXPECT_EQ(red.llt().info(), Eigen::Success);
  }
}

TEST(NeumannLoad, ConstantProfileOnUnitEdge) {
  const StructuredMesh mesh(5, 5);
  const auto s = space_of({{"b1", uniform_grid(-1, 1, 3)}, {"b2", uniform_grid(-1, 1, 3)}, {"b3", uniform_grid(-1, 1, 3)}});
  const auto loads = assemble_neumann_load(mesh, patches::rectangle(1, 1), Edge::left, InterfaceBasis{}, s, {"b1", "b2", "b3"});
  const Eigen::VectorXd f = particularize_loads(loads, s, std::vector<double>{1.0, 0.0, 0.0}, mesh.node_count());
  const auto nodes = mesh.edge_nodes(Edge::left);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double expect = (i == 0 || i + 1 == nodes.size()) ? 0.125 : 0.25;
    EXPECT_NEAR(f(static_cast<Eigen::Index>(nodes[i])), expect, 1e-15);
  }
  EXPECT_NEAR(f.sum(), 1.0, 1e-14);
  const Eigen::VectorXd z = particularize_loads(loads, s, std::vector<double>{0.0, 0.0, 0.0}, mesh.node_count());
  EXPECT_EQ(z.norm(), 0.0);
}

TEST(NeumannLoad, TotalInflowMatchesArcLength) {
  const StructuredMesh mesh(11, 11);
  const auto geo = patches::quarter_annulus("r", "w", {1, 3}, {1, 3});
  const auto s = space_of({{"r", uniform_grid(1, 3, 5)},
                           {"w", uniform_grid(1, 3, 5)},
                           {"b1", uniform_grid(-100, 100, 3)},
                           {"b2", uniform_grid(-100, 100, 3)},
                           {"b3", uniform_grid(-100, 100, 3)}});
  const auto loads = assemble_neumann_load(mesh, geo, Edge::right, InterfaceBasis{}, s, {"b1", "b2", "b3"});
  const std::vector<double> at{1.5, 2.5, 100.0, 0.0, 0.0};
  const Eigen::VectorXd f = particularize_loads(loads, s, at, mesh.node_count());
  const double arc = std::numbers::pi / 2 * (1.5 + 2.5);
  EXPECT_NEAR(f.sum(), 100.0 * arc, 1e-10 * 100.0 * arc);
}

TEST(NeumannLoad, LinearInCoefficients) {
  const StructuredMesh mesh(6, 6);
  const auto geo = patches::quarter_annulus("r", "w", {1, 3}, {1, 3});
  const auto s = space_of({{"r", uniform_grid(1, 3, 5)},
                           {"w", uniform_grid(1, 3, 5)},
                           {"b1", uniform_grid(-100, 100, 5)},
                           {"b2", uniform_grid(-100, 100, 5)},
                           {"b3", uniform_grid(-100, 100, 5)}});
  const auto loads = assemble_neumann_load(mesh, geo, Edge::bottom, InterfaceBasis{}, s, {"b1", "b2", "b3"});
  auto at = [&](double a, double b, double c) { return particularize_loads(loads, s, std::vector<double>{1.7, 2.2, a, b, c}, mesh.node_count()); };
  const Eigen::VectorXd sum = at(10, -20, 33) + at(-40, 5, 12);
  EXPECT_LT((sum - at(-30, -15, 45) - at(0, 0, 0)).norm(), 1e-12 * sum.norm());
}

TEST(CpCompress, ConstantNeedsOneTerm) {
  SampledTensor t{7, {4, 5}, Eigen::MatrixXd::Zero(7, 20)};
  for (int r = 0; r < 7; ++r) t.data.row(r).setConstant(1.0 + r);
  const auto c = cp_compress_coefficients(t, 1e-12);
  EXPECT_EQ(c.terms(), 1u);
  EXPECT_TRUE(c.reached);
}

TEST(CpCompress, SeparableNeedsOneTerm) {
  SampledTensor t{6, {3, 4, 5}, Eigen::MatrixXd(6, 60)};
  for (int r = 0; r < 6; ++r)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 5; ++c) t.data(r, a + 3 * b + 12 * c) = std::sin(r + 1.0) * (1.0 + a) * std::exp(0.1 * b) / (2.0 + c);
  const auto c = cp_compress_coefficients(t, 1e-12);
  EXPECT_EQ(c.terms(), 1u);
  EXPECT_LE(c.max_error, 1e-12);
}

TEST(CpCompress, TaperedAnnulusMetric) {
  const StructuredMesh mesh(6, 6);
  const auto geo = patches::tapered_annulus("r", "w0", "w1", {1, 3}, {1, 3});
  const auto rule = gauss(2);
  SampledTensor t;
  t.extents = {5, 5, 5};
  t.rows = mesh.element_count() * 4 * 3;
  t.data.resize(static_cast<Eigen::Index>(t.rows), 125);
  const auto grid = uniform_grid(1, 3, 5);
  for (int c = 0; c < 125; ++c) {
    const Bindings p{{"r", grid[c % 5]}, {"w0", grid[(c / 5) % 5]}, {"w1", grid[c / 25]}};
    t.data.col(c) = detail::metric_coefficients(mesh, rule, geo.patch, geo.control_net(p), 1.0, p);
  }
  const auto c = cp_compress_coefficients(t, 1e-6);
  EXPECT_TRUE(c.reached) << c.warning << " terms=" << c.terms();
  // Independent resampling of the reconstruction.
  double err = 0.0;
  for (int col = 0; col < 125; ++col) {
    const int i0 = col % 5, i1 = (col / 5) % 5, i2 = col / 25;
    Eigen::VectorXd rec = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(t.rows));
    for (std::size_t r = 0; r < c.terms(); ++r) {
      const auto ri = static_cast<Eigen::Index>(r);
      rec += c.row_modes.col(ri) * c.param_modes[0](i0, ri) * c.param_modes[1](i1, ri) * c.param_modes[2](i2, ri);
    }
    err = std::max(err, (rec - t.data.col(col)).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(err, 1e-6);
}

TEST(CpCompress, RankCapReportsWarning) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  SampledTensor t{10, {6, 6}, Eigen::MatrixXd(10, 36)};
  for (auto& x : t.data.reshaped()) x = g(rng);
  const auto c = cp_compress_coefficients(t, 1e-14, 2);
  EXPECT_FALSE(c.reached);
  EXPECT_FALSE(c.warning.empty());
  EXPECT_EQ(c.terms(), 2u);
}

TEST(Plate, MatchesDirectAssembly) {
  const StructuredMesh mesh(7, 5);
  const auto s = plate_space();
  const auto op = assemble_plate(mesh, patches::rectangle(0.3, 0.2), s);
  ASSERT_EQ(op.terms.size(), 3u);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> pick(0, 10);
  for (int i = 0; i < 5; ++i) {
    const std::vector<double> at{s.grids[0][pick(rng)], s.grids[1][pick(rng)], s.grids[2][pick(rng)]};
    const SparseMatrix k = op.particularize(at);
    const SparseMatrix ref = direct_plate(7, 5, 0.3, 0.2, at[0], at[1], at[2]);
    EXPECT_LT(rel_frobenius(k, ref), 1e-8);
    // Energy of a random displacement.
    Eigen::VectorXd u(k.rows());
    std::normal_distribution<double> g;
    for (auto& x : u) x = g(rng);
    const double e = u.dot(k * u), e_ref = u.dot(ref * u);
    EXPECT_NEAR(e, e_ref, 1e-8 * e_ref);
  }
}

TEST(Plate, StiffnessLinearInYoungModulus) {
  const StructuredMesh mesh(4, 4);
  const auto op = assemble_plate(mesh, patches::rectangle(0.2, 0.2), plate_space());
  const SparseMatrix a = op.particularize(std::vector<double>{0.01, 100e9, 0.3});
  const SparseMatrix b = op.particularize(std::vector<double>{0.01, 200e9, 0.3});
  EXPECT_LT(SparseMatrix(b - 2.0 * a).norm(), 1e-13 * b.norm());
}

TEST(Plate, RejectsNonRectangles) {
  const StructuredMesh mesh(4, 4);
  EXPECT_THROW(assemble_plate(mesh, patches::quarter_annulus("r", "w", {1, 3}, {1, 3}), plate_space()), GeometryError);
}

namespace {

/// Clamped at y = 0, uniform transverse line load q on y = b.
Eigen::VectorXd cantilever(std::size_t n, double a, double b, double h, double e, double nu, double q) {
  const StructuredMesh mesh(n, n);
  const auto s = plate_space();
  const auto op = assemble_plate(mesh, patches::rectangle(a, b), s);
  const SparseMatrix k = op.particularize(std::vector<double>{h, e, nu});
  const InterfaceBasis basis;
  Eigen::VectorXd coeff = Eigen::VectorXd::Zero(3);
  coeff(0) = q;
  const Eigen::VectorXd f = edge_load_direct(mesh, patches::rectangle(a, b), {}, Edge::top, basis, coeff, 3, 0);
  return solve_particular(k, f, node_dofs(mesh.edge_nodes(Edge::bottom), 3));
}

}  // namespace

TEST(Plate, ThinCantileverIsLockingFree) {
  const double a = 0.2, b = 0.2, h = 0.001, e = 200e9, nu = 0.2, q = 1.0;
  const Eigen::VectorXd u = cantilever(21, a, b, h, e, nu, q);
  const StructuredMesh mesh(21, 21);
  const double tip = u(static_cast<Eigen::Index>(3 * mesh.node(10, 20)));
  const double strip = 4 * q * b * b * b * (1 - nu * nu) / (e * h * h * h);
  const double beam = 4 * q * b * b * b / (e * h * h * h);
  EXPECT_GT(tip, 0.97 * strip);
  EXPECT_LT(tip, 1.03 * beam);
}

TEST(Plate, SymmetricLoadGivesSymmetricDeflection) {
  const std::size_t n = 11;
  const Eigen::VectorXd u = cantilever(n, 0.2, 0.2, 0.005, 150e9, 0.3, 1e3);
  const StructuredMesh mesh(n, n);
  double max_w = 0.0, asym = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) {
      const double w = u(static_cast<Eigen::Index>(3 * mesh.node(i, j)));
      const double wm = u(static_cast<Eigen::Index>(3 * mesh.node(n - 1 - i, j)));
      max_w = std::max(max_w, std::abs(w));
      asym = std::max(asym, std::abs(w - wm));
    }
  EXPECT_GT(max_w, 0.0);
  EXPECT_LT(asym, 1e-8 * max_w);
}
