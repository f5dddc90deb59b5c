#include "geonodal/errors.hpp"
#include "geonodal/estimates.hpp"
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

Region whole(const Surface& s) {
  Region r;
  for (std::size_t t = 0; t < s.triangle_count(); ++t) r.triangles.push_back(static_cast<int>(t));
  return r;
}

// total variation of log q over one period, q = cos^2 + sin^2 / 2 (1-D reduction)
double dong_integral_oracle() {
  const int n = 1000000;
  double tv = 0.0, prev = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = static_cast<double>(i) / n;
    const double c = std::cos(2 * pi * x), s = std::sin(2 * pi * x);
    const double lq = std::log(c * c + 0.5 * s * s);
    if (i > 0) tv += std::abs(lq - prev);
    prev = lq;
  }
  return 0.5 * tv;
}

}  // namespace

TEST_CASE("dong bound on the full torus") {
  auto p = torus_wave(1, 128);
  auto b = dong_upper_bound(p, whole(*p.surface), 1e-3);
  CHECK(b.extracted_length == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(b.integral_term == doctest::Approx(dong_integral_oracle()).epsilon(0.01));
  CHECK(dong_integral_oracle() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-6));
  CHECK(b.volume_term == doctest::Approx(std::sqrt(2 * p.lambda)).epsilon(1e-12));
  CHECK(b.boundary_term == 0.0);
  CHECK(b.total == doctest::Approx(b.integral_term + b.volume_term + b.boundary_term));
  CHECK(b.dominates());
  auto half = dong_upper_bound(p, whole(*p.surface), 5e-4);
  CHECK(std::abs(half.total - b.total) < 0.01 * b.total);
  CHECK_THROWS_AS(dong_upper_bound(p, whole(*p.surface), 0.5), DomainError);
}

TEST_CASE("dong bound on a positive region") {
  auto p = torus_wave(1, 64);
  Region pos;
  for (std::size_t t = 0; t < p.surface->triangle_count(); ++t) {
    const auto& tri = p.surface->triangles()[t];
    bool inside = true;
    for (int v : tri) inside = inside && p.values[v] > 0.1;
    if (inside) pos.triangles.push_back(static_cast<int>(t));
  }
  auto b = dong_upper_bound(p, pos, 1e-3);
  CHECK(b.extracted_length == 0.0);
  CHECK(b.total >= std::sqrt(2 * p.lambda) * b.area);
  CHECK(b.area > 0);
  CHECK(b.boundary_term == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("dong dominance per pixel on the sphere") {
  auto sph = Surface::unit_sphere(4);
  auto p = closed_form_eigenpair(SphereMode{2, 0}, sph);
  auto set = extract_nodal_set(p);
  auto c = select_centers(set, 1.0 / std::sqrt(p.lambda));
  auto dec = build_pixels(sph, c, RadiusRule::standard(c));
  DongEvaluator ev(p, 1e-3);
  double covered = 0.0;
  for (std::size_t k = 0; k < dec.pixels.size(); ++k) {
    auto b = ev.evaluate(dec.region(static_cast<int>(k)), set, static_cast<int>(k));
    CHECK(b.dominates());
    covered += b.extracted_length;
  }
  CHECK(covered == doctest::Approx(set.length).epsilon(1e-9));
}

TEST_CASE("scaling fit") {
  std::vector<std::pair<double, double>> exact;
  for (int m = 1; m <= 8; ++m) exact.emplace_back(4 * pi * pi * m * m, 2.0 * m);
  auto f = scaling_fit(exact);
  CHECK(std::abs(f.slope - 0.5) < 1e-12);
  std::vector<std::pair<double, double>> zonal;
  for (int l = 2; l <= 10; ++l) zonal.emplace_back(l * (l + 1.0), oracle::zonal_nodal_length(l));
  CHECK(std::abs(scaling_fit(zonal).slope - 0.5) <= 0.03);
  CHECK_THROWS_AS(scaling_fit({{1.0, 1.0}}), DomainError);
  CHECK_THROWS_AS(scaling_fit({{1.0, 1.0}, {1.0, 2.0}}), DomainError);
}

TEST_CASE("lower bound density bookkeeping") {
  auto p = torus_wave(1, 64);
  auto set = extract_nodal_set(p);
  auto tor = p.surface;
  CenterCluster one{tor, {{0.0, 0.5, 0}}, {tor->locate({0.0, 0.5, 0})}, 1.0, 0};
  auto dec = build_pixels(tor, one, RadiusRule::fixed(2.0));
  REQUIRE(dec.pixels.size() == 1);
  auto d = lower_bound_density(p, dec, set);
  REQUIRE(d.values.size() == 1);
  CHECK(d.values[0] == doctest::Approx(std::sqrt(p.lambda) * 2.0).epsilon(1e-9));

  auto c = select_centers(set, 1.0 / std::sqrt(p.lambda));
  auto dec2 = build_pixels(tor, c, RadiusRule::standard(c));
  auto d2 = lower_bound_density(p, dec2, set);
  CHECK(d2.values.size() + static_cast<std::size_t>(d2.excluded) == dec2.pixels.size());
  CHECK(d2.min <= d2.median);
  CHECK(d2.median <= d2.max);
}

TEST_CASE("harnack ratios") {
  auto tor = Surface::flat_torus(1.0, 1.0, 64, 64);
  std::vector<double> u(tor->vertex_count());
  for (std::size_t v = 0; v < u.size(); ++v) u[v] = std::sin(2 * pi * tor->vertices()[v].x());
  auto p = sampled_pair(tor, 4 * pi * pi, u);
  // quarter-period pixel x in [0, 1/4]
  PixelDecomposition dec;
  dec.surface = tor;
  Pixel px;
  px.signature = {0};
  for (std::size_t t = 0; t < tor->triangle_count(); ++t) {
    const auto c = tor->corners(static_cast<int>(t));
    const double cx = (c[0].x() + c[1].x() + c[2].x()) / 3;
    if (cx > 0 && cx < 0.25) px.triangles.push_back(static_cast<int>(t));
  }
  dec.pixels.push_back(px);
  const std::vector<double> grid{0.5, 0.7, 0.9, 1.0 - 1e-9};
  auto rep = harnack_ratios(p, dec, grid);
  REQUIRE(rep.records.size() == 4);
  CHECK(rep.records[0].c20 == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rep.records[3].c20 == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t k = 1; k < rep.records.size(); ++k) CHECK(rep.records[k].c20 <= rep.records[k - 1].c20);
  for (const auto& r : rep.records) {
    CHECK(r.grad_sup >= r.grad_inf);
    CHECK(r.hess_sup >= r.hess_inf);
  }
  CHECK_THROWS_AS(harnack_ratios(p, dec, std::vector<double>{0.0}), DomainError);
  auto far = harnack_ratios(p, dec, std::vector<double>{2.0});
  CHECK(far.records.front().empty);
  CHECK(far.empty_records == 1);
}

TEST_CASE("bernstein ratios") {
  auto tor = Surface::flat_torus(1.0, 1.0, 128, 128);
  for (int m : {1, 3}) {
    std::vector<double> u(tor->vertex_count()), u5(tor->vertex_count());
    for (std::size_t v = 0; v < u.size(); ++v) {
      u[v] = std::sin(2 * pi * m * tor->vertices()[v].x());
      u5[v] = 5 * u[v];
    }
    const double lambda = 4 * pi * pi * m * m;
    auto p = sampled_pair(tor, lambda, u);
    auto p5 = sampled_pair(tor, lambda, u5);
    auto b = bernstein_ratios(p, whole(*tor), 1.0);
    CHECK(b.grad_ratio == doctest::Approx(1.0).epsilon(0.01));
    CHECK(b.hess_ratio == doctest::Approx(0.5).epsilon(0.02));
    auto b5 = bernstein_ratios(p5, whole(*tor), 5.0);
    CHECK(b5.grad_ratio == doctest::Approx(b.grad_ratio).epsilon(1e-12));
    CHECK(b5.hess_ratio == doctest::Approx(b.hess_ratio).epsilon(1e-12));
    CHECK(bernstein_ratios(p, whole(*tor), 1e9).grad_ratio < 1e-8);
  }
}

TEST_CASE("nodal domain dirichlet check") {
  auto p = torus_wave(2, 64);
  auto dom = nodal_domains(p, 0.0);
  REQUIRE(dom.count == 4);
  for (int k = 0; k < dom.count; ++k) {
    auto chk = nodal_domain_eigencheck(p, dom, k);
    CHECK_FALSE(chk.skipped);
    CHECK(chk.relative_gap <= 0.05);
    CHECK(chk.area == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(chk.cheeger_lhs == doctest::Approx(pi * pi).epsilon(0.05));
    CHECK(chk.cheeger_lhs >= chk.cheeger_rhs);
  }
  std::vector<int> all(p.surface->vertex_count());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<int>(v);
  CHECK_THROWS_AS(nodal_domain_eigencheck(p, all), DomainError);
  CHECK(nodal_domain_eigencheck(p, std::vector<int>{0, 1, 2}).skipped);
}

TEST_CASE("front restriction zeros") {
  auto p = torus_wave(4, 64);
  Polyline transverse;
  transverse.points = {{0.01, 0.3, 0}, {0.51, 0.3, 0}};
  auto z = front_restriction_zeros(p, transverse);
  CHECK(std::abs(z.zero_count - 4) <= 1);
  CHECK(z.arc_length == doctest::Approx(0.5));
  Polyline inside;
  inside.points = {{0.06, 0.1, 0}, {0.06, 0.6, 0}};
  CHECK(front_restriction_zeros(p, inside).zero_count == 0);
  Polyline circle;
  for (int k = 0; k <= 200; ++k) {
    const double a = 2 * pi * k / 200;
    circle.points.push_back({0.5 + 0.2 * std::cos(a), 0.5 + 0.2 * std::sin(a), 0});
  }
  circle.closed = true;
  auto zc = front_restriction_zeros(p, circle);
  CHECK(zc.zero_count % 2 == 0);
  CHECK(zc.zero_count > 0);
}
