#include "geonodal/errors.hpp"
#include "geonodal/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace geonodal;
using std::numbers::pi;

TEST_CASE("closed form eigenvalues") {
  auto tor = Surface::flat_torus(1.0, 1.0, 16, 16);
  CHECK(closed_form_eigenvalue(TorusMode{1, 0, TorusBranch::sine}, *tor) == doctest::Approx(39.4784176));
  auto sph = Surface::unit_sphere(2);
  CHECK(closed_form_eigenvalue(SphereMode{3, 1}, *sph) == 12.0);
  // P2(0) = -1/2 against P2(1) = 1
  CHECK(closed_form_value(SphereMode{2, 0}, *sph, {1, 0, 0}) == doctest::Approx(-0.5));
  CHECK(closed_form_value(SphereMode{2, 0}, *sph, {0, 0, 1}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(closed_form_eigenpair(SphereMode{2, 3}, sph), DomainError);
  CHECK_THROWS_AS(closed_form_eigenpair(TorusMode{0, 0, TorusBranch::cosine}, tor), DomainError);
  CHECK_THROWS_AS(closed_form_eigenpair(TorusMode{1, 0, TorusBranch::sine}, sph), DomainError);
}

TEST_CASE("closed form pair is mass normalized") {
  auto sph = Surface::unit_sphere(3);
  auto p = closed_form_eigenpair(SphereMode{2, 1}, sph);
  double n2 = 0.0;
  for (std::size_t v = 0; v < p.values.size(); ++v) n2 += sph->vertex_areas()[v] * p.values[v] * p.values[v];
  CHECK(n2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("analytic gradient against finite differences") {
  auto sph = Surface::unit_sphere(1);
  const Vec3 x = Vec3(0.3, -0.5, 0.6).normalized();
  for (auto fam : {ClosedFormFamily{SphereMode{3, 0}}, ClosedFormFamily{SphereMode{3, -2}}}) {
    const Vec3 g = closed_form_gradient(fam, *sph, x);
    CHECK(std::abs(g.dot(x)) < 1e-8);
    const Vec3 t = x.cross(Vec3::UnitZ()).normalized();
    const double h = 1e-5;
    const double fd = (closed_form_value(fam, *sph, (x + h * t).normalized()) -
                       closed_form_value(fam, *sph, (x - h * t).normalized())) / (2 * h);
    CHECK(g.dot(t) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("assembly invariants") {
  auto sph = Surface::unit_sphere(3);
  auto mesh = Surface::triangle_mesh(sph->vertices(), sph->triangles());
  auto ops = assemble_laplacian(mesh);
  Eigen::VectorXd ones = Eigen::VectorXd::Ones(ops.stiffness.rows());
  Eigen::VectorXd rows = ops.stiffness * ones;
  const double scale = ops.stiffness.diagonal().cwiseAbs().maxCoeff();
  CHECK(rows.cwiseAbs().maxCoeff() <= 1e-12 * scale);
  CHECK(ops.mass.sum() == doctest::Approx(mesh->total_area()).epsilon(1e-12));
  CHECK((ops.mass.array() > 0).all());
  Eigen::SparseMatrix<double> t = ops.stiffness.transpose();
  CHECK((t - ops.stiffness).norm() == 0.0);
  CHECK_FALSE(ops.ill_conditioned);
}

TEST_CASE("right angle gives zero cotangent weight") {
  // corner tetrahedron: the right angle at vertex 0 of {0,2,1} is opposite edge (1,2),
  // whose other triangle {1,2,3} is equilateral
  std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<Tri> t{{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  auto m = Surface::triangle_mesh(v, t);
  auto ops = assemble_laplacian(m);
  CHECK(ops.stiffness.coeff(1, 2) == doctest::Approx(-0.5 / std::sqrt(3.0)).epsilon(1e-14));
  CHECK(ops.stiffness.coeff(0, 1) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("gradient evaluation") {
  auto tor = Surface::flat_torus(1.0, 1.0, 64, 64);
  auto c = sampled_pair(tor, 0.0, std::vector<double>(tor->vertex_count(), 3.0));
  CHECK(evaluate_gradient(c, 10).norm() < 1e-12);
  std::vector<double> lin(tor->vertex_count());
  auto plane = Surface::triangle_mesh({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}},
                                      {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}});
  auto lp = sampled_pair(plane, 0.0, {0.0, 2.5, 0.0, 0.0});
  // triangle {0,2,1} lies in z = 0: gradient of 2.5 x
  CHECK((evaluate_gradient(lp, 0) - Vec3(2.5, 0, 0)).norm() < 1e-12);
  auto s = closed_form_eigenpair(TorusMode{1, 0, TorusBranch::sine}, tor);
  // triangle with a vertex at x = 0 and an edge along x: {a, b, c} of cell (0, 0)
  const Vec3 g = evaluate_gradient(s, 0) / s.normalization;
  const double h = 1.0 / 64;
  CHECK(g.x() == doctest::Approx(std::sin(2 * pi * h) / h).epsilon(1e-9));
  CHECK(s.gradient_at({0, 0.3, 0}).norm() / s.normalization == doctest::Approx(2 * pi).epsilon(1e-9));
  CHECK_THROWS_AS(evaluate_gradient(s, -1), DomainError);
}

TEST_CASE("kernel of closed mesh") {
  auto sph = Surface::unit_sphere(3);
  auto mesh = Surface::triangle_mesh(sph->vertices(), sph->triangles());
  auto pairs = solve_eigen(assemble_laplacian(mesh), 1, -1.0);
  CHECK(std::abs(pairs[0].lambda) < 1e-9);
  const double v0 = pairs[0].values[0];
  for (double v : pairs[0].values) CHECK(v == doctest::Approx(v0).epsilon(1e-8));
  CHECK(v0 > 0);
}

TEST_CASE("icosphere spectrum") {
  auto sph = Surface::unit_sphere(4);
  auto mesh = Surface::triangle_mesh(sph->vertices(), sph->triangles());
  auto ops = assemble_laplacian(mesh);
  auto pairs = solve_eigen(ops, 25, -1.0);
  for (int l = 1; l <= 4; ++l)
    for (int k = l * l; k < (l + 1) * (l + 1); ++k)
      CHECK(pairs[k].lambda == doctest::Approx(l * (l + 1.0)).epsilon(0.01));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& u = pairs[i].values;
    double rq_num = 0.0, rq_den = 0.0;
    Eigen::Map<const Eigen::VectorXd> uv(u.data(), static_cast<Eigen::Index>(u.size()));
    rq_num = uv.dot(ops.stiffness * uv);
    rq_den = uv.dot(ops.mass.cwiseProduct(uv));
    CHECK(rq_num / rq_den == doctest::Approx(pairs[i].lambda).epsilon(1e-8));
    CHECK(pairs[i].relative_residual <= 1e-8);
    for (std::size_t j = 0; j < i; ++j) {
      Eigen::Map<const Eigen::VectorXd> wv(pairs[j].values.data(), static_cast<Eigen::Index>(u.size()));
      CHECK(std::abs(uv.dot(ops.mass.cwiseProduct(wv))) <= 1e-8);
    }
  }
}

TEST_CASE("refinement convergence of the first sphere eigenvalue") {
  double prev = -1;
  for (int s = 2; s <= 4; ++s) {
    auto sph = Surface::unit_sphere(s);
    auto pairs = solve_eigen(assemble_laplacian(sph), 2, -1.0);
    const double err = std::abs(pairs[1].lambda - 2.0);
    if (prev > 0) CHECK(prev / err >= 3.0);
    prev = err;
  }
}

TEST_CASE("torus grid (1,0) mode") {
  auto tor = Surface::flat_torus(1.0, 1.0, 64, 64);
  auto pairs = solve_eigen(assemble_laplacian(tor), 5, -1.0);
  for (int k = 1; k < 5; ++k) CHECK(pairs[k].lambda == doctest::Approx(4 * pi * pi).epsilon(0.01));
}

TEST_CASE("determinism and shift checks") {
  auto sph = Surface::unit_sphere(2);
  auto ops = assemble_laplacian(sph);
  auto a = solve_eigen(ops, 4, -1.0);
  auto b = solve_eigen(ops, 4, -1.0);
  for (int k = 0; k < 4; ++k) CHECK(a[k].values == b[k].values);
  CHECK_THROWS_AS(solve_eigen(ops, 0, -1.0), DomainError);
}
