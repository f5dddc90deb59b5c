#include "geonodal/errors.hpp"
#include "geonodal/inequalities.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <numbers>

using namespace geonodal;
using std::numbers::pi;

TEST_CASE("polynomial algebra and JSON") {
  const auto p = Polynomial::real_power(3);
  CHECK(p.to_json()["coefficients"]["3,0"] == 1.0);
  CHECK(p.to_json()["coefficients"]["1,2"] == -3.0);
  CHECK(p.is_harmonic());
  CHECK(Polynomial::imag_power(4).is_harmonic());
  CHECK(p.homogeneous_degree() == 3);
  const double x[2] = {0.3, -0.7};
  const double re = std::pow(std::complex<double>(0.3, -0.7), 3).real();
  CHECK(p.evaluate(x) == doctest::Approx(re).epsilon(1e-14));
  const auto g = p.gradient(x);
  CHECK(g[0] == doctest::Approx(3 * (0.09 - 0.49)));
  CHECK(g[1] == doctest::Approx(-6 * 0.3 * -0.7));
  CHECK(Polynomial::from_json(p.to_json()) == p);

  const Polynomial q(2, {{{2, 0}, 1.0}, {{0, 2}, 1.0}});
  CHECK_FALSE(q.is_harmonic());
  CHECK(q.laplacian().to_json()["coefficients"]["0,0"] == 4.0);
  const Polynomial mixed(2, {{{2, 0}, 1.0}, {{1, 0}, 1.0}});
  CHECK_FALSE(mixed.homogeneous_degree().has_value());
  CHECK_THROWS_AS(Polynomial::from_json(nlohmann::json::parse(R"({"dimension":2,"coefficients":{"1,x":1}})")),
                  ConfigError);
  CHECK_THROWS_AS(Polynomial::from_json(nlohmann::json::parse(R"({"dimension":2,"coefficients":{"1":1}})")),
                  ConfigError);
}

TEST_CASE("Hardy grid constant matches the one-dimensional closed form") {
  // int f^2 / x^2 <= c int f'^2 on (a, b) with Dirichlet ends: 1/c = 1/4 + (pi / log(b/a))^2
  HardyOptions o;
  o.resolution = 4000;
  o.min_distance = 0.1;
  const auto e = hardy_constant(Polynomial::coordinate(1, 0), HardyInequality::gh2, o);
  const double h = e.spacing;
  const double a = 0.1 - 0.5 * h, b = 1.0 + 0.5 * h;
  const double exact = 1.0 / (0.25 + std::pow(pi / std::log(b / a), 2));
  CHECK(e.converged);
  CHECK(e.c == doctest::Approx(exact).epsilon(5e-3));
}

TEST_CASE("Hardy inverse power iteration agrees with a dense oracle at 16^3") {
  const Polynomial p(3, {{{1, 1, 0}, 1.0}});
  HardyOptions o;
  o.resolution = 16;
  const auto e = hardy_constant(p, HardyInequality::gh1, o);

  const int n = 16;
  const double h = 2.0 / n;
  std::vector<int> id(n * n * n, -1);
  std::vector<double> w;
  int count = 0;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double x = -1 + (i + 0.5) * h, y = -1 + (j + 0.5) * h;
        const double v = std::abs(x * y);
        if (v / std::hypot(x, y) < 2 * h) continue;
        id[(k * n + j) * n + i] = count++;
        w.push_back(1.0 / v);
      }
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(count, count), M = Eigen::MatrixXd::Zero(count, count);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const int r = id[(k * n + j) * n + i];
        if (r < 0) continue;
        K(r, r) = 6 * h;
        M(r, r) = h * h * h * w[r];
        const int nb[3][2] = {{i + 1, 0}, {j + 1, 1}, {k + 1, 2}};
        for (const auto& [c, axis] : nb) {
          if (c >= n) continue;
          const int ii = axis == 0 ? c : i, jj = axis == 1 ? c : j, kk = axis == 2 ? c : k;
          const int s = id[(kk * n + jj) * n + ii];
          if (s < 0) continue;
          K(r, s) = K(s, r) = -h;
        }
      }
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(M, K, Eigen::EigenvaluesOnly);
  const double dense = es.eigenvalues().maxCoeff();
  CHECK(e.active_nodes == count);
  CHECK(e.c == doctest::Approx(dense).epsilon(0.01));
}

TEST_CASE("Hardy sanity bounds, refinement and errors") {
  const auto x1 = Polynomial::coordinate(2, 0);
  HardyOptions o;
  o.resolution = 48;
  o.min_distance = 0.5;
  const auto e = hardy_constant(x1, HardyInequality::gh2, o);
  CHECK(e.max_weight <= 4.0 + 1e-12);
  // same support, unit weight: 1 / (Dirichlet first eigenvalue)
  const double h = e.spacing;
  std::vector<char> active(48 * 48, 0);
  std::vector<double> ones(48 * 48, 1.0);
  for (int j = 0; j < 48; ++j)
    for (int i = 0; i < 48; ++i) active[j * 48 + i] = std::abs(-1 + (i + 0.5) * h) >= 0.5;
  const auto poincare = grid_rayleigh_constant(2, 48, h, active, ones, 1e-10, 2000);
  CHECK(e.c <= e.max_weight * poincare.c * (1 + 1e-9));

  const int res[] = {16, 32, 64};
  HardyOptions r;
  const auto ref = hardy_refinement(x1, HardyInequality::gh2, res, r);
  CHECK(ref.monotone);
  CHECK(ref.estimates.back().c < 4.0);

  const Polynomial mixed(2, {{{2, 0}, 1.0}, {{1, 0}, 1.0}});
  CHECK_THROWS_AS(hardy_constant(mixed, HardyInequality::gh1, r), DomainError);
  CHECK_THROWS_AS(hardy_constant(Polynomial::real_power(2), HardyInequality::gh3, r), DomainError);
  const Polynomial radial(2, {{{2, 0}, 1.0}, {{0, 2}, 1.0}});
  r.resolution = 32;
  CHECK(hardy_constant(radial, HardyInequality::gh3, r).c > 0);
}

TEST_CASE("logarithmic Hardy variant") {
  const auto x = Polynomial::coordinate(2, 0);
  HardyOptions o;
  o.resolution = 48;
  const double deltas[] = {1e-2, 1e-3, 1e-4};
  const auto es = hardy2d_log_constant(x, deltas, o);
  REQUIRE(es.size() == 3);
  for (const auto& e : es) CHECK(e.normalized == doctest::Approx(e.c * std::abs(std::log(e.delta))));
  CHECK(es[0].c > es[1].c);
  CHECK(es[1].c > es[2].c);

  const double bad[] = {1.0};
  CHECK_THROWS_AS(hardy2d_log_constant(x, bad, o), DomainError);
  o.delta = 0.9995;
  CHECK(hardy_constant(x, HardyInequality::log2d, o).divergent);
  o.delta = 1e-3;
  o.min_distance = 0.5;
  const auto far = hardy_constant(x, HardyInequality::log2d, o);
  CHECK(std::isfinite(far.c));
  CHECK(far.c < 0.1);
  CHECK_THROWS_AS(hardy_constant(Polynomial::coordinate(3, 0), HardyInequality::log2d, o), DomainError);
}

TEST_CASE("Lojasiewicz exponents of Re z^m") {
  for (int m : {2, 3, 4}) {
    const auto fit = lojasiewicz_fit(Polynomial::real_power(m), -1, 1, 10000, 11);
    CHECK(std::abs(fit.ell1 - 1.0 / m) <= 0.02);
    CHECK(fit.violations == 0);
    // |grad h| = m r^(m-1) >= m |h|^(1 - 1/m)
    CHECK(fit.c1 == doctest::Approx(m).epsilon(0.05));
  }
  const auto lin = lojasiewicz_fit(Polynomial::coordinate(2, 0), -1, 1, 10000, 11);
  CHECK(lin.ell1 == doctest::Approx(1.0));
  CHECK(lin.c1 == doctest::Approx(1.0));

  const auto a = lojasiewicz_fit(Polynomial::real_power(3), -1, 1, 10000, 5);
  const auto b = lojasiewicz_fit(Polynomial::real_power(3), -1, 1, 10000, 5);
  CHECK(a.ell1 == b.ell1);
  CHECK(a.c1 == b.c1);

  CHECK_THROWS_AS(lojasiewicz_fit(Polynomial(2), -1, 1, 10000, 1), DomainError);
  const Polynomial radial(2, {{{2, 0}, 1.0}, {{0, 2}, 1.0}});
  CHECK_THROWS_AS(lojasiewicz_fit(radial, -1, 1, 10000, 1), DomainError);
  CHECK_THROWS_AS(lojasiewicz_fit(Polynomial::real_power(2), -1, 1, 100, 1), DomainError);
}

namespace {

HarmonicApproxProblem chart_problem(double mu) {
  HarmonicApproxProblem pr;
  pr.boundary = [](double x, double y) { return x * x - y * y + 0.5 * x * y + x; };
  pr.mu = mu;
  pr.perturbation = standard_perturbation(mu, 1.0);
  pr.bound_constant = 50;
  return pr;
}

}  // namespace

TEST_CASE("harmonic approximation iteration") {
  auto flat = chart_problem(0.0);
  flat.perturbation = [](double, double) { return Eigen::Matrix2d::Zero().eval(); };
  const auto r0 = harmonic_approximation(flat);
  CHECK(r0.converged);
  for (double r : r0.residuals) CHECK(r == 0.0);

  const auto a = harmonic_approximation(chart_problem(0.4));
  const auto b = harmonic_approximation(chart_problem(0.2));
  CHECK(a.contraction_estimate <= 0.5);
  CHECK(a.converged);
  for (std::size_t k = 1; k < a.residuals.size(); ++k) CHECK(a.residuals[k] < a.residuals[k - 1]);
  CHECK(a.curved_residual <= a.first_correction);
  CHECK(a.decay_rate / b.decay_rate == doctest::Approx(2.0).epsilon(0.25));
  CHECK(a.contraction_estimate / b.contraction_estimate == doctest::Approx(2.0).epsilon(0.05));

  const auto big = harmonic_approximation(chart_problem(1.6));
  CHECK(big.contraction_estimate > 1.0);
  CHECK(big.diverged);
  CHECK_FALSE(big.converged);

  auto tight = chart_problem(0.4);
  tight.bound_constant = 1.0;
  CHECK_THROWS_AS(harmonic_approximation(tight), DomainError);
}

TEST_CASE("phase-amplitude on a plane wave") {
  const int m = 3;
  const double k = 2 * pi * m;
  RaySamples ray;
  for (int i = 0; i <= 400; ++i) {
    const double s = i / 400.0;
    ray.s.push_back(s);
    ray.u.push_back(std::sin(k * s));
    ray.du.push_back(k * std::cos(k * s));
  }
  const auto pa = phase_amplitude_extract(ray, k * k);
  CHECK(pa.max_log_amplitude <= 1e-9);
  CHECK(pa.max_slope_error <= 1e-6);
  CHECK(pa.reconstruction_error <= 1e-6);
  CHECK(pa.phase_monotone);

  auto torus = Surface::flat_torus(1.0, 1.0, 8, 8);
  auto pair = closed_form_eigenpair(TorusMode{m, 0, TorusBranch::sine}, torus);
  pair.normalization = 1.0;
  const auto pp = phase_amplitude_extract(pair, Vec3(0.01, 0.3, 0), Vec3(1, 0, 0), 0.9, 300);
  CHECK(pp.max_log_amplitude <= 1e-9);
  CHECK(pp.max_slope_error <= 1e-6);

  // neighbor rays with phase shifts -d, +d at separation w: angular slope 2d / w
  const double d = 0.01, w = 0.1;
  std::vector<RaySamples> side(2);
  for (int sgn : {0, 1}) {
    const double shift = sgn ? d : -d;
    for (double s : ray.s) {
      side[sgn].s.push_back(s);
      side[sgn].u.push_back(std::sin(k * (s + shift)));
      side[sgn].du.push_back(k * std::cos(k * (s + shift)));
    }
  }
  const std::vector<double> offsets(ray.s.size(), w);
  const auto full = phase_amplitude_extract(ray, k * k, side, offsets);
  CHECK(pa.eikonal_defect <= 1e-9);
  CHECK(full.eikonal_defect == doctest::Approx(std::pow(2 * d / w, 2)).epsilon(1e-6));

  RaySamples zero = ray;
  std::fill(zero.u.begin(), zero.u.end(), 0.0);
  std::fill(zero.du.begin(), zero.du.end(), 0.0);
  CHECK_THROWS_AS(phase_amplitude_extract(zero, k * k), DomainError);
  RaySamples coarse;
  for (int i = 0; i <= 20; ++i) {
    coarse.s.push_back(i / 20.0);
    coarse.u.push_back(std::sin(k * i / 20.0));
  }
  CHECK_THROWS_AS(phase_amplitude_extract(coarse, k * k), DomainError);
}

TEST_CASE("phase-amplitude along a sphere meridian") {
  const int l = 20;
  auto pair = closed_form_eigenpair(SphereMode{l, 0}, Surface::unit_sphere(2));
  const double t0 = pi / 4;
  const Vec3 start(std::sin(t0), 0, std::cos(t0)), dir(std::cos(t0), 0, -std::sin(t0));
  const auto pa = phase_amplitude_extract(pair, start, dir, pi / 2, 401);
  CHECK(pa.phase_monotone);
  CHECK(pa.reconstruction_error <= 1e-6);
  CHECK(pa.eikonal_defect <= 0.1);

  // oracle: Legendre samples with dense centered differences
  RaySamples ray;
  const double dt = 1e-6;
  for (int i = 0; i <= 400; ++i) {
    const double t = t0 + (pi / 2) * i / 400.0;
    ray.s.push_back(t - t0);
    ray.u.push_back(oracle::legendre(l, std::cos(t)));
    ray.du.push_back((oracle::legendre(l, std::cos(t + dt)) - oracle::legendre(l, std::cos(t - dt))) / (2 * dt));
  }
  const auto ref = phase_amplitude_extract(ray, l * (l + 1.0));
  CHECK(pa.eikonal_defect == doctest::Approx(ref.eikonal_defect).epsilon(1e-4));
  MESSAGE("l = 20 eikonal defect " << pa.eikonal_defect << ", C = l * defect = " << l * pa.eikonal_defect);
}
