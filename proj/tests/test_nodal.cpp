#include "geonodal/errors.hpp"
#include "geonodal/nodal.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace geonodal;
using std::numbers::pi;

namespace {

EigenPair torus_wave(int m, int cells) {
  return closed_form_eigenpair(TorusMode{m, 0, TorusBranch::sine}, Surface::flat_torus(1.0, 1.0, cells, cells));
}

}  // namespace

TEST_CASE("torus plane wave nodal lines") {
  auto p = torus_wave(1, 64);
  auto set = extract_nodal_set(p);
  CHECK(set.polylines.size() == 2);
  for (const auto& l : set.polylines) CHECK(l.closed);
  CHECK(std::abs(set.length - 2.0) < 1e-9);
  CHECK(set.perturbed_vertices > 0);
  CHECK(set.graph_degree_ge3.empty());
  auto p3 = torus_wave(3, 192);
  CHECK(std::abs(nodal_length(extract_nodal_set(p3)) - 6.0) < 1e-9);
}

TEST_CASE("segment endpoints sit at linear zeros of sign-changing edges") {
  auto sph = Surface::unit_sphere(3);
  auto p = closed_form_eigenpair(SphereMode{3, 1}, sph);
  auto set = extract_nodal_set(p);
  std::vector<int> per_tri(sph->triangle_count(), 0);
  for (const auto& seg : set.segments) {
    ++per_tri[seg.triangle];
    for (const auto& e : {seg.a, seg.b}) {
      const double a = set.field[e.v0], b = set.field[e.v1];
      CHECK(a * b < 0);
      CHECK(std::abs((1 - e.t) * a + e.t * b) <= 1e-12 * std::max(std::abs(a), std::abs(b)));
    }
  }
  for (std::size_t t = 0; t < per_tri.size(); ++t) {
    const auto& tri = sph->triangles()[t];
    const bool pos = set.field[tri[0]] > 0 || set.field[tri[1]] > 0 || set.field[tri[2]] > 0;
    const bool neg = set.field[tri[0]] < 0 || set.field[tri[1]] < 0 || set.field[tri[2]] < 0;
    CHECK(per_tri[t] == ((pos && neg) ? 1 : 0));
  }
}

TEST_CASE("positive and zero functions") {
  auto tor = Surface::flat_torus(1.0, 1.0, 8, 8);
  auto pos = sampled_pair(tor, 1.0, std::vector<double>(tor->vertex_count(), 2.0));
  auto set = extract_nodal_set(pos);
  CHECK(set.empty());
  CHECK(nodal_length(set) == 0.0);
  auto zero = sampled_pair(tor, 1.0, std::vector<double>(tor->vertex_count(), 0.0));
  CHECK_THROWS_AS(extract_nodal_set(zero), DomainError);
}

TEST_CASE("sphere zonal lengths against Legendre roots") {
  auto sph = Surface::unit_sphere(4);
  auto y1 = extract_nodal_set(closed_form_eigenpair(SphereMode{1, 0}, sph));
  CHECK(y1.polylines.size() == 1);
  CHECK(y1.length == doctest::Approx(2 * pi).epsilon(0.01));
  auto y2 = extract_nodal_set(closed_form_eigenpair(SphereMode{2, 0}, sph));
  CHECK(y2.length == doctest::Approx(oracle::zonal_nodal_length(2)).epsilon(0.02));
  CHECK(oracle::zonal_nodal_length(2) == doctest::Approx(4 * pi * std::sqrt(2.0 / 3.0)));
}

TEST_CASE("length restricted to a region") {
  auto p = torus_wave(1, 64);
  auto set = extract_nodal_set(p);
  Region half;
  std::vector<double> clip(p.surface->vertex_count());
  for (std::size_t v = 0; v < clip.size(); ++v) clip[v] = p.surface->vertices()[v].y() - 0.25;
  for (std::size_t t = 0; t < p.surface->triangle_count(); ++t) half.triangles.push_back(static_cast<int>(t));
  half.clip_fields.push_back(clip);
  // y <= 0.25 within the chart (the wrap row y ~ 1 contributes its own interpolation)
  const double l = nodal_length(set, half);
  CHECK(l > 0.4);
  CHECK(l < 0.6);
  CHECK(nodal_length(set, Region{}) == 0.0);
}

TEST_CASE("nodal domains") {
  auto p3 = torus_wave(3, 192);
  auto d = nodal_domains(p3, 0.0);
  CHECK(d.count == 6);
  double vol = 0.0;
  for (double v : d.volumes) vol += v;
  CHECK(vol == doctest::Approx(1.0).epsilon(1e-9));
  auto sph = Surface::unit_sphere(4);
  for (int l = 1; l <= 5; ++l) CHECK(nodal_domains(closed_form_eigenpair(SphereMode{l, 0}, sph), 0.0).count == l + 1);
  CHECK_THROWS_AS(nodal_domains(p3, 1e6), DomainError);

  // with epsilon > 0 volumes add up to total minus the tube
  const double eps = 0.3 * p3.max_abs();
  auto de = nodal_domains(p3, eps);
  double ve = 0.0;
  for (double v : de.volumes) ve += v;
  CHECK(ve == doctest::Approx(1.0 - tubular_neighborhood(p3, eps).area).epsilon(1e-9));
}

TEST_CASE("faber-krahn area floor across the torus family") {
  double lo = 1e300;
  for (int m = 1; m <= 8; ++m) {
    auto p = torus_wave(m, 16 * m);
    auto d = nodal_domains(p, 0.0);
    for (double a : d.volumes) lo = std::min(lo, a * p.lambda);
  }
  CHECK(lo > 1.0);
}

TEST_CASE("courant bound on fem eigenpairs") {
  auto sph = Surface::unit_sphere(3);
  auto tor = Surface::flat_torus(1.0, 1.0, 40, 40);
  for (const auto& surf : {sph, tor}) {
    auto pairs = solve_eigen(assemble_laplacian(surf), 20, -1.0);
    for (std::size_t k = 1; k < pairs.size(); ++k) {
      const int count = nodal_domains(pairs[k], 0.0).count;
      CHECK(count <= static_cast<int>(k + 1));
      CHECK(count >= 2);
    }
  }
}

TEST_CASE("zero in every ball") {
  for (int m : {1, 2, 3}) {
    auto p = torus_wave(m, 64 * m);
    CHECK(zero_in_every_ball(p, 1.0 / (4 * m) + 1e-3, 64).holds);
    auto miss = zero_in_every_ball(p, 1.0 / (8 * m), 64);
    CHECK_FALSE(miss.holds);
    CHECK(miss.worst_margin == doctest::Approx(1.0 / (8 * m)).epsilon(1e-6));
    CHECK(zero_in_every_ball(p, p.surface->diameter(), 16).holds);
  }
}

TEST_CASE("tubular neighborhood") {
  auto p = torus_wave(1, 64);
  const double s = p.normalization;
  auto tube = tubular_neighborhood(p, s * std::sin(2 * pi * 0.05));
  CHECK(tube.area == doctest::Approx(0.2).epsilon(0.02));
  CHECK(tubular_neighborhood(p, 2 * p.max_abs()).area == doctest::Approx(1.0).epsilon(1e-12));
  double prev = 0.0;
  for (double eta : {1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0}) {
    const double a = tubular_neighborhood(p, eta * p.max_abs()).area;
    CHECK(a >= prev);
    prev = a;
  }
  CHECK(tubular_neighborhood(p, 1e-8 * p.max_abs()).area < 1e-6);
}

TEST_CASE("singular points") {
  auto tor = Surface::flat_torus(1.0, 1.0, 64, 64);
  auto prod = closed_form_eigenpair(TorusProductMode{1, 1, TorusBranch::sine, TorusBranch::sine}, tor);
  double gmax = 0.0;
  for (const auto& g : prod.gradients) gmax = std::max(gmax, g.norm());
  auto sp = singular_points(extract_nodal_set(prod), prod, 0.2 * gmax);
  REQUIRE(sp.points.size() == 4);
  for (const auto& p : sp.points) {
    CHECK(p.multiplicity == 2);
    const double fx = std::remainder(p.position.x(), 0.5), fy = std::remainder(p.position.y(), 0.5);
    CHECK(std::hypot(fx, fy) < 1.0 / 64);
  }
  auto sph = Surface::unit_sphere(4);
  auto y1 = closed_form_eigenpair(SphereMode{1, 0}, sph);
  double g1 = 0.0;
  for (const auto& g : y1.gradients) g1 = std::max(g1, g.norm());
  CHECK(singular_points(extract_nodal_set(y1), y1, 0.1 * g1).points.empty());
  auto wave = torus_wave(2, 64);
  double gw = 0.0;
  for (const auto& g : wave.gradients) gw = std::max(gw, g.norm());
  CHECK(singular_points(extract_nodal_set(wave), wave, 0.1 * gw).points.empty());
}

TEST_CASE("reference nodal lengths of closed-form families") {
  auto tor = Surface::flat_torus(1.0, 1.0, 16, 16);
  CHECK(*reference_nodal_length(closed_form_eigenpair(TorusMode{3, 0, TorusBranch::sine}, tor)) ==
        doctest::Approx(6.0));
  CHECK(*reference_nodal_length(closed_form_eigenpair(TorusMode{1, 1, TorusBranch::cosine}, tor)) ==
        doctest::Approx(2.0 * std::sqrt(2.0)));
  CHECK(*reference_nodal_length(closed_form_eigenpair(TorusProductMode{2, 1}, tor)) == doctest::Approx(6.0));
  auto sph = Surface::unit_sphere(1);
  for (int l = 1; l <= 10; ++l)
    CHECK(*reference_nodal_length(closed_form_eigenpair(SphereMode{l, 0}, sph)) ==
          doctest::Approx(oracle::zonal_nodal_length(l)).epsilon(1e-10));
  // P_2^1 vanishes on the equator; cos(phi) on two half-meridians
  CHECK(*reference_nodal_length(closed_form_eigenpair(SphereMode{2, 1}, sph)) == doctest::Approx(4 * pi));
  CHECK_FALSE(reference_nodal_length(closed_form_eigenpair(SphereMode{0, 0}, sph)).has_value());
}
