#include "geonodal/errors.hpp"
#include "geonodal/mesh_io.hpp"
#include "geonodal/surface.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace geonodal;
using std::numbers::pi;

namespace {

int nearest_vertex(const Surface& s, const Vec3& p) {
  int best = 0;
  double bd = 1e300;
  for (std::size_t v = 0; v < s.vertex_count(); ++v) {
    const double d = s.displacement(p, s.vertices()[v]).norm();
    if (d < bd) bd = d, best = static_cast<int>(v);
  }
  return best;
}

SurfacePtr octahedron() {
  std::vector<Vec3> v{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<Tri> t{{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}, {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
  return Surface::triangle_mesh(v, t);
}

}  // namespace

TEST_CASE("icosphere counts and euler characteristic") {
  for (int s = 0; s <= 3; ++s) {
    auto sph = Surface::unit_sphere(s);
    CHECK(sph->vertex_count() == 10 * (1u << (2 * s)) + 2);
    CHECK(sph->euler_characteristic() == 2);
  }
  auto tor = Surface::flat_torus(1.0, 1.0, 8, 8);
  CHECK(tor->euler_characteristic() == 0);
  CHECK(tor->total_area() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact distances") {
  auto sph = Surface::unit_sphere(2);
  CHECK(sph->exact_distance({0, 0, 1}, {0, 0, -1}) == doctest::Approx(pi));
  auto tor = Surface::flat_torus(1.0, 1.0, 8, 8);
  CHECK(tor->exact_distance({0, 0, 0}, {0.75, 0, 0}) == doctest::Approx(0.25));
  const int src = nearest_vertex(*tor, {0, 0, 0});
  auto field = geodesic_distance(*tor, tor->vertex_point(src));
  const int dst = nearest_vertex(*tor, {0.75, 0, 0});
  CHECK(field.values[dst] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(field.values[src] == 0.0);
}

TEST_CASE("marching distance on icosphere mesh") {
  auto sph = Surface::unit_sphere(4);
  auto mesh = Surface::triangle_mesh(sph->vertices(), sph->triangles());
  const int pole = nearest_vertex(*mesh, {0, 0, 1});
  auto d = geodesic_distance(*mesh, mesh->vertex_point(pole));
  CHECK(d.method == DistanceMethod::graph_marching);
  int checked = 0;
  for (std::size_t v = 0; v < mesh->vertex_count(); ++v) {
    if (std::abs(mesh->vertices()[v].z()) > 1e-12) continue;
    CHECK(std::abs(d.values[v] - pi / 2) <= 0.02 * pi / 2);
    ++checked;
  }
  CHECK(checked > 0);
  // Lipschitz along edges
  for (const auto& e : mesh->edges())
    CHECK(std::abs(d.values[e.a] - d.values[e.b]) <= mesh->edge_length(e.a, e.b) + 1e-12);
}

TEST_CASE("triangle inequality on sampled triples") {
  auto sph = Surface::unit_sphere(3);
  auto mesh = Surface::triangle_mesh(sph->vertices(), sph->triangles());
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(mesh->vertex_count()) - 1);
  const double tol = 0.02 * pi;
  for (int k = 0; k < 10; ++k) {
    const int a = pick(rng), b = pick(rng), c = pick(rng);
    auto da = geodesic_distance(*mesh, mesh->vertex_point(a));
    auto db = geodesic_distance(*mesh, mesh->vertex_point(b));
    CHECK(da.values[c] <= da.values[b] + db.values[c] + 2 * tol);
  }
}

TEST_CASE("off source is rejected") {
  auto sph = Surface::unit_sphere(1);
  SurfacePoint bad{0, {0.5, 0.7, 0.2}};
  CHECK_THROWS_AS(geodesic_distance(*sph, bad), DomainError);
  SurfacePoint out{100000, {1, 0, 0}};
  CHECK_THROWS_AS(geodesic_distance(*sph, out), DomainError);
}

TEST_CASE("curvature") {
  auto sph = Surface::unit_sphere(4);
  CHECK(gaussian_curvature(*sph, 3).gaussian == 1.0);
  auto tor = Surface::flat_torus(1.0, 2.0, 6, 6);
  CHECK(gaussian_curvature(*tor, 3).gaussian == 0.0);

  auto mesh = Surface::triangle_mesh(sph->vertices(), sph->triangles());
  double sum_k = 0.0, defects = 0.0;
  for (std::size_t v = 0; v < mesh->vertex_count(); ++v) {
    sum_k += gaussian_curvature(*mesh, static_cast<int>(v)).gaussian;
    defects += angle_defect(*mesh, static_cast<int>(v));
  }
  CHECK(sum_k / static_cast<double>(mesh->vertex_count()) == doctest::Approx(1.0).epsilon(0.02));
  CHECK(defects == doctest::Approx(4 * pi).epsilon(1e-9));

  auto oct = octahedron();
  double d = 0.0;
  for (int v = 0; v < 6; ++v) d += angle_defect(*oct, v);
  CHECK(d == doctest::Approx(2 * pi * oct->euler_characteristic()).epsilon(1e-9));
}

TEST_CASE("riccati closed forms") {
  const double r0 = 1e-3;
  CHECK(std::abs(geodesic_circle_curvature([](double) { return 0.0; }, 0.5, 0.01, 100.0) - 2.0) < 1e-6);
  CHECK(std::abs(geodesic_circle_curvature([](double) { return 0.0; }, 1.0, r0) - 1.0) < 1e-6);
  CHECK(std::abs(geodesic_circle_curvature([](double) { return 1.0; }, 1.0, r0, 1.0 / std::tan(r0)) -
                 0.642093) < 1e-6);
  CHECK(std::abs(geodesic_circle_curvature([](double) { return -1.0; }, 1.0, r0, 1.0 / std::tanh(r0)) -
                 1.313035) < 1e-6);
}

TEST_CASE("riccati comparison order and conjugate point") {
  const double r0 = 1e-3;
  for (double r = 0.1; r < pi / 2; r += 0.1) {
    const double hp = geodesic_circle_curvature([](double) { return 1.0; }, r, r0, 1.0 / std::tan(r0));
    const double h0 = geodesic_circle_curvature([](double) { return 0.0; }, r, r0, 1.0 / r0);
    const double hn = geodesic_circle_curvature([](double) { return -1.0; }, r, r0, 1.0 / std::tanh(r0));
    CHECK(hp < h0);
    CHECK(h0 < hn);
  }
  try {
    geodesic_circle_curvature([](double) { return 1.0; }, 4.0, r0, 1.0 / std::tan(r0));
    FAIL("expected conjugate point");
  } catch (const ConjugatePointError& e) {
    CHECK(e.blowup_radius() == doctest::Approx(pi).epsilon(1e-3));
  }
}

TEST_CASE("geodesic balls") {
  auto sph = Surface::unit_sphere(5);
  const int pole = nearest_vertex(*sph, {0, 0, 1});
  auto hemi = geodesic_ball(*sph, sph->vertex_point(pole), pi / 2);
  CHECK(hemi.boundary_length == doctest::Approx(2 * pi).epsilon(0.01));
  CHECK(hemi.area == doctest::Approx(2 * pi).epsilon(0.01));

  auto tor = Surface::flat_torus(1.0, 1.0, 128, 128);
  const int c = nearest_vertex(*tor, {0.5, 0.5, 0});
  auto disc = geodesic_ball(*tor, tor->vertex_point(c), 0.1);
  CHECK(disc.area == doctest::Approx(pi * 0.01).epsilon(0.02));
  CHECK(disc.boundary.size() == 1);
  CHECK(disc.boundary_length == doctest::Approx(2 * pi * 0.1).epsilon(0.02));

  auto empty = geodesic_ball(*tor, tor->vertex_point(c), 0.0);
  CHECK(empty.region.triangles.empty());
  CHECK(empty.area == 0.0);
  CHECK_THROWS_AS(geodesic_ball(*tor, tor->vertex_point(c), -1.0), DomainError);
}

TEST_CASE("mesh validation") {
  std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<Tri> open{{0, 1, 2}, {0, 1, 3}};
  CHECK_THROWS_AS(Surface::triangle_mesh(v, open), GeometryError);
  CHECK_THROWS_AS(Surface::flat_torus(0.0, 1.0, 4, 4), DomainError);
  std::vector<Tri> tet{{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  auto m = Surface::triangle_mesh(v, tet);
  CHECK(m->euler_characteristic() == 2);
}

TEST_CASE("off and obj ingestion") {
  std::istringstream off("OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n");
  auto m = read_off(off);
  CHECK(m->triangle_count() == 4);
  std::istringstream quad("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
  CHECK_THROWS_AS(read_off(quad), GeometryError);
  std::istringstream obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1/1 3/3 2/2\nf 1 2 4\nf -4 -1 -2\nf 2 3 4\n");
  auto o = read_obj(obj);
  CHECK(o->vertex_count() == 4);
}

TEST_CASE("contours on torus") {
  auto tor = Surface::flat_torus(1.0, 1.0, 32, 32);
  std::vector<double> f(tor->vertex_count());
  for (std::size_t v = 0; v < f.size(); ++v) f[v] = std::sin(2 * pi * tor->vertices()[v].x()) + 1e-9;
  auto segs = contour_segments(*tor, f, 0.0);
  auto lines = chain_contour(*tor, segs);
  CHECK(lines.size() == 2);
  double len = 0.0;
  for (const auto& l : lines) {
    CHECK(l.closed);
    len += l.length();
  }
  CHECK(len == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(sublevel_area(*tor, f, 0.0) == doctest::Approx(0.5).epsilon(1e-6));
}
