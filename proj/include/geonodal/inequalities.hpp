#pragma once

#include "geonodal/spectral.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace geonodal {

/// Real polynomial in `dimension` variables, stored as exponent tuple -> coefficient.
class Polynomial {
public:
  using Exponents = std::vector<int>;

  Polynomial() = default;
  explicit Polynomial(int dimension) : dimension_(dimension) {}
  Polynomial(int dimension, std::map<Exponents, double> terms);

  /// Single variable x_i (0-based).
  static Polynomial coordinate(int dimension, int i);
  /// Re(z^m) and Im(z^m) in two variables.
  static Polynomial real_power(int m);
  static Polynomial imag_power(int m);

  /// {"dimension": n, "coefficients": {"2,0": 1.0, "0,2": -1.0}}
  static Polynomial from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  int dimension() const noexcept { return dimension_; }
  const std::map<Exponents, double>& terms() const noexcept { return terms_; }
  bool is_zero() const noexcept { return terms_.empty(); }
  int degree() const;
  /// Common total degree, or nullopt when the terms disagree (or the polynomial is zero).
  std::optional<int> homogeneous_degree() const;

  double evaluate(std::span<const double> x) const;
  Eigen::VectorXd gradient(std::span<const double> x) const;
  Polynomial derivative(int i) const;
  Polynomial laplacian() const;
  bool is_harmonic() const { return laplacian().is_zero(); }

  std::string to_string() const;

  friend bool operator==(const Polynomial&, const Polynomial&) = default;

private:
  void add(const Exponents& e, double c);

  int dimension_ = 0;
  std::map<Exponents, double> terms_;
};

// ---------------------------------------------------------------------------
// Hardy

enum class HardyInequality { gh1, gh2, gh3, log2d };

std::string to_string(HardyInequality id);
HardyInequality parse_hardy_inequality(const std::string& name);

struct HardyOptions {
  double lower = -1.0;  ///< box [lower, upper]^n
  double upper = 1.0;
  int resolution = 32;  ///< cell-centered nodes per axis
  double tube_factor = 2.0;  ///< nodes with |P| / |grad P| < tube_factor * h are excluded
  double min_distance = 0.0;  ///< optional wider exclusion around N(P)
  double delta = 1e-3;        ///< log2d only
  double tolerance = 1e-9;
  int max_iterations = 3000;
};

struct HardyEstimate {
  Polynomial polynomial;
  int degree = 0;
  HardyInequality id = HardyInequality::gh1;
  int resolution = 0;
  double spacing = 0.0;
  double c = 0.0;
  double sigma = 0.0;  ///< smallest generalized eigenvalue, c = 1 / sigma
  double delta = 0.0;
  double normalized = 0.0;  ///< c |log delta| (log2d), c otherwise
  int active_nodes = 0;
  int iterations = 0;
  bool converged = false;
  bool divergent = false;  ///< log2d with delta so close to 1 that the constant blows up
  double max_weight = 0.0;
};

/// Weight of the inequality at x (0 where P vanishes).
double hardy_weight(const Polynomial& p, int degree, HardyInequality id, std::span<const double> x, double delta);

HardyEstimate hardy_constant(const Polynomial& p, HardyInequality id, const HardyOptions& options);
std::vector<HardyEstimate> hardy2d_log_constant(const Polynomial& p, std::span<const double> deltas,
                                                HardyOptions options);

struct HardyRefinement {
  std::vector<HardyEstimate> estimates;
  bool monotone = true;  ///< nondecreasing within 1e-3 relative slack
};

HardyRefinement hardy_refinement(const Polynomial& p, HardyInequality id, std::span<const int> resolutions,
                                 HardyOptions options);

/// Largest c with int w f^2 <= c int |grad f|^2 over grid functions supported on `active`
/// (Dirichlet outside). Inverse power iteration; CG solves on the stiffness matrix.
struct GridRayleigh {
  double c = 0.0;
  int iterations = 0;
  bool converged = false;
};

GridRayleigh grid_rayleigh_constant(int dimension, int resolution, double spacing, std::span<const char> active,
                                    std::span<const double> weight, double tolerance, int max_iterations);

// ---------------------------------------------------------------------------
// Lojasiewicz

struct LojasiewiczFit {
  Polynomial polynomial;
  int samples = 0;
  double ell1 = 0.0;          ///< |grad h| >= c1 |h|^(1 - ell1)
  double c1 = 0.0;            ///< min sampled |grad h| / |h|^(1 - ell1)
  double c1_envelope = 0.0;   ///< exp(intercept) of the envelope fit
  int violations = 0;         ///< samples below c1 (1 - 1e-9)
  double worst_margin = 0.0;  ///< min ratio / c1 - 1
  int holdout_violations = 0; ///< same count on an independent sample set
  double ell2 = 0.0;          ///< |h| >= c2 d(x, N(h))^ell2 (two variables only, NaN otherwise)
  double c2 = 0.0;
  std::vector<std::pair<double, double>> envelope;  ///< (log|h|, log|grad h|) bin minima
};

LojasiewiczFit lojasiewicz_fit(const Polynomial& h, double lower, double upper, int count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Harmonic approximation

struct HarmonicApproxProblem {
  int resolution = 64;  ///< interior nodes per axis on the unit square
  std::function<double(double, double)> boundary;
  /// Symmetric perturbation R^{ij}; the inverse metric is delta + R.
  std::function<Eigen::Matrix2d(double, double)> perturbation;
  double mu = 0.0;
  double rho = 1.0;
  double bound_constant = 10.0;  ///< C in ||grad^j R|| <= C mu rho^(2-j)
  int iterations = 60;
  double tolerance = 1e-12;  ///< relative to the H1 norm of F_0
};

struct HarmonicApproxRun {
  int resolution = 0;
  double mu = 0.0;
  double rho = 0.0;
  std::array<double, 3> bound_ratios{};  ///< max ||grad^j R|| / (mu rho^(2-j))
  std::vector<double> residuals;         ///< ||F_n - F_{n-1}||_H1, n >= 1
  double decay_rate = 0.0;               ///< geometric mean of residual ratios from n = 2
  double contraction_estimate = 0.0;     ///< power-iteration norm of the update map
  double first_correction = 0.0;
  double curved_residual = 0.0;  ///< ||Delta_0^{-1} L F_final||_H1 for the full equation L
  bool converged = false;
  bool diverged = false;
  std::vector<double> solution;  ///< (N+2)^2 grid, boundary included, row-major in y
};

HarmonicApproxRun harmonic_approximation(const HarmonicApproxProblem& problem);

/// mu rho^2 S with S a fixed smooth symmetric field; the default perturbation of the CLI and tests.
std::function<Eigen::Matrix2d(double, double)> standard_perturbation(double mu, double rho);

// ---------------------------------------------------------------------------
// Phase-amplitude

struct RaySamples {
  std::vector<double> s;   ///< arclength, strictly increasing
  std::vector<double> u;
  std::vector<double> du;  ///< du/ds; central differences when empty
};

struct PhaseAmplitude {
  RaySamples ray;
  double beta1 = 0.0;
  std::vector<double> log_amplitude;  ///< Lambda
  std::vector<double> phase;          ///< phi, length units
  std::vector<double> phase_slope;    ///< d phi / ds
  double eikonal_defect = 0.0;        ///< sup | phi'^2 + |grad_ang phi|^2 - 1 |
  double max_log_amplitude = 0.0;     ///< sup |Lambda|
  double max_slope_error = 0.0;       ///< sup |phi' - 1|
  double reconstruction_error = 0.0;  ///< sup |e^Lambda sin(beta1 phi) - u| / max|u|
  bool phase_monotone = true;
  int interior_samples = 0;
};

/// Neighbor rays (left, right) add the angular term; `offsets` is their transverse separation per sample.
PhaseAmplitude phase_amplitude_extract(const RaySamples& ray, double lambda,
                                       std::span<const RaySamples> neighbors = {},
                                       std::span<const double> offsets = {}, double reference_norm = 0.0);

/// Geodesic ray on the sphere (great circle) or torus (straight line) with analytic or piecewise
/// gradients from the pair.
RaySamples sample_ray(const EigenPair& pair, const Vec3& start, const Vec3& direction, double length, int count);

PhaseAmplitude phase_amplitude_extract(const EigenPair& pair, const Vec3& start, const Vec3& direction,
                                       double length, int count);

}  // namespace geonodal
