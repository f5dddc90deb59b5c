#include "geonodal/errors.hpp"
#include "geonodal/pixelize.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace geonodal;
using std::numbers::pi;

namespace {

EigenPair torus_wave(int m, int cells) {
  return closed_form_eigenpair(TorusMode{m, 0, TorusBranch::sine}, Surface::flat_torus(1.0, 1.0, cells, cells));
}

double min_pair_distance(const Surface& s, const CenterCluster& c) {
  double best = 1e300;
  for (std::size_t i = 0; i < c.centers.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) best = std::min(best, s.exact_distance(c.centers[i], c.centers[j]));
  return best;
}

}  // namespace

TEST_CASE("center selection on the torus line net") {
  auto p = torus_wave(1, 64);
  auto set = extract_nodal_set(p);
  auto c = select_centers(set, 0.1);
  CHECK(c.centers.size() >= 19);
  CHECK(c.centers.size() <= 21);
  CHECK(min_pair_distance(*p.surface, c) >= 0.1 * (1 - 1e-6));
  // every nodal point within 2 spacings of a center
  for (const auto& seg : set.segments) {
    const Vec3 q = p.surface->edge_point_position(seg.a);
    double d = 1e300;
    for (const auto& x : c.centers) d = std::min(d, p.surface->exact_distance(x, q));
    CHECK(d <= 0.2);
  }
  CHECK(select_centers(set, 10.0).centers.size() == 1);
  CHECK_THROWS_AS(select_centers(set, 0.0), DomainError);
  auto tor = p.surface;
  auto flat = sampled_pair(tor, 1.0, std::vector<double>(tor->vertex_count(), 1.0));
  CHECK_THROWS_AS(select_centers(extract_nodal_set(flat), 0.1), DomainError);
}

TEST_CASE("short nodal curve gets one center") {
  auto tor = Surface::flat_torus(1.0, 1.0, 64, 64);
  // small bump: zero set is a tiny loop of length ~ 2 pi 0.02
  std::vector<double> u(tor->vertex_count());
  for (std::size_t v = 0; v < u.size(); ++v) {
    const Vec3 d = tor->displacement({0.5, 0.5, 0}, tor->vertices()[v]);
    u[v] = d.norm() - 0.02;
  }
  auto set = extract_nodal_set(sampled_pair(tor, 1.0, u));
  CHECK(set.length < 0.2);
  CHECK(select_centers(set, 0.5).centers.size() == 1);
}

TEST_CASE("pixels on the torus") {
  auto p = torus_wave(1, 64);
  auto c = select_centers(extract_nodal_set(p), 0.25);
  auto dec = build_pixels(p.surface, c, RadiusRule::fixed(0.3));
  CHECK(dec.uncovered.empty());
  double area = dec.uncovered_area;
  for (const auto& px : dec.pixels) area += px.area;
  CHECK(area == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& f : dec.fronts) {
    CHECK(f.tension == 0.0);
    const auto& sig = dec.pixels[static_cast<std::size_t>(f.pixel)].signature;
    CHECK(std::count(sig.begin(), sig.end(), f.ball) == 1);
    for (double h : f.h) CHECK(h == doctest::Approx(1.0 / 0.3).epsilon(1e-7));
  }
  for (std::size_t k = 0; k < dec.pixels.size(); ++k) {
    CHECK(dec.pixels[k].curvature_ratio == 0.0);
    CHECK(check_condition(dec, static_cast<int>(k), std::vector<double>{1e-3}, 1e-3).holds);
  }
}

TEST_CASE("single and disjoint balls") {
  auto tor = Surface::flat_torus(1.0, 1.0, 128, 128);
  CenterCluster one{tor, {{0.5, 0.5, 0}}, {tor->locate({0.5, 0.5, 0})}, 0.1, 0};
  auto d1 = build_pixels(tor, one, RadiusRule::fixed(0.1));
  REQUIRE(d1.pixels.size() == 1);
  REQUIRE(d1.fronts.size() == 1);
  CHECK(d1.fronts[0].arc.closed);
  CHECK(d1.fronts[0].arc.length() == doctest::Approx(2 * pi * 0.1).epsilon(0.01));
  CHECK(d1.pixels[0].area == doctest::Approx(pi * 0.01).epsilon(0.03));

  CenterCluster two{tor, {{0.2, 0.5, 0}, {0.7, 0.5, 0}}, {tor->locate({0.2, 0.5, 0}), tor->locate({0.7, 0.5, 0})}, 0.1, 0};
  auto d2 = build_pixels(tor, two, RadiusRule::fixed(0.1));
  CHECK(d2.pixels.size() == 2);
  for (const auto& px : d2.pixels) CHECK(px.signature.size() == 1);
  CHECK_THROWS_AS(build_pixels(tor, two, RadiusRule::listed({0.1})), DomainError);
  CHECK_THROWS_AS(build_pixels(tor, two, RadiusRule::fixed(-1.0)), DomainError);
}

TEST_CASE("sphere fronts carry cot r") {
  auto sph = Surface::unit_sphere(4);
  auto p = closed_form_eigenpair(SphereMode{2, 0}, sph);
  auto c = select_centers(extract_nodal_set(p), 1.0 / std::sqrt(p.lambda));
  auto dec = build_pixels(sph, c, RadiusRule::standard(c));
  const double r = 1.2 / std::sqrt(p.lambda);
  REQUIRE_FALSE(dec.fronts.empty());
  for (const auto& f : dec.fronts) {
    for (double h : f.h) CHECK(h == doctest::Approx(1.0 / std::tan(r)).epsilon(1e-6));
    CHECK(f.tension == 0.0);
  }
}

TEST_CASE("front tension oracle") {
  const int n = 4001;
  std::vector<double> s(n), h(n);
  for (int i = 0; i < n; ++i) {
    s[i] = 2 * pi * i / (n - 1);
    h[i] = 1 + 0.1 * std::sin(s[i]);
  }
  double oracle = 0.0;
  for (int i = 0; i <= 200000; ++i) {
    const double x = 2 * pi * i / 200000.0;
    oracle = std::max(oracle, std::pow(0.1 * std::cos(x) / (1 + 0.1 * std::sin(x)), 2));
  }
  CHECK(front_tension(s, h) == doctest::Approx(oracle).epsilon(1e-5));
  CHECK(front_tension(std::vector<double>{0, 1, 2}, std::vector<double>{3, 3, 3}) == 0.0);
  CHECK_THROWS_AS(front_tension(std::vector<double>{0, 1}, std::vector<double>{1, 1}), DomainError);
}

TEST_CASE("curvature ratio oracle") {
  auto tor = Surface::flat_torus(1.0, 1.0, 256, 8);
  std::vector<double> K(tor->vertex_count());
  for (std::size_t v = 0; v < K.size(); ++v) K[v] = 1 + 0.2 * std::sin(2 * pi * tor->vertices()[v].x());
  std::vector<int> all(tor->triangle_count());
  for (std::size_t t = 0; t < all.size(); ++t) all[t] = static_cast<int>(t);
  double oracle = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double x = i / 100000.0;
    const double R = 2 + 0.4 * std::sin(2 * pi * x), dR = 0.8 * pi * std::cos(2 * pi * x);
    oracle = std::max(oracle, dR * dR / (R * R * R));
  }
  CHECK(pixel_curvature_ratio(*tor, all, K) == doctest::Approx(oracle).epsilon(0.01));
  std::vector<double> zero(tor->vertex_count(), 0.0), two(tor->vertex_count(), 1.0);
  CHECK(pixel_curvature_ratio(*tor, all, zero) == 0.0);
  CHECK(pixel_curvature_ratio(*tor, all, two) == 0.0);
}

TEST_CASE("condition thresholds are inclusive") {
  auto tor = Surface::flat_torus(1.0, 1.0, 64, 64);
  CenterCluster one{tor, {{0.5, 0.5, 0}}, {tor->locate({0.5, 0.5, 0})}, 0.1, 0};
  auto dec = build_pixels(tor, one, RadiusRule::fixed(0.1));
  dec.pixels[0].curvature_ratio = 0.25;
  dec.fronts[0].tension = 0.5;
  CHECK(check_condition(dec, 0, std::vector<double>{0.5}, 0.25).holds);
  auto bad = check_condition(dec, 0, std::vector<double>{0.5}, 0.0);
  CHECK_FALSE(bad.holds);
  CHECK(bad.ratio_failed);
  CHECK(check_condition(dec, 0, std::vector<double>{0.4}, 1.0).failed_fronts.size() == 1);
}

TEST_CASE("pixel count grows linearly in lambda") {
  std::vector<double> ratio;
  for (int m = 1; m <= 4; ++m) {
    auto p = torus_wave(m, 32 * m);
    const double d0 = 1.0 / std::sqrt(p.lambda);
    auto c = select_centers(extract_nodal_set(p), d0);
    auto dec = build_pixels(p.surface, c, RadiusRule::standard(c));
    ratio.push_back(static_cast<double>(dec.pixels.size()) / p.lambda);
  }
  const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
  CHECK(*hi / *lo <= 2.0);
}
