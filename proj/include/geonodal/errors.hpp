#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace geonodal {

/// Input outside the mathematical domain of an operation (bad indices, empty sets, ...).
class DomainError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Degenerate geometry: zero-area stars, non-manifold edges, malformed mesh files.
class GeometryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver hit its cap without meeting tolerance.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, std::vector<double> residuals = {})
      : std::runtime_error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const noexcept { return residuals_; }

private:
  std::vector<double> residuals_;
};

/// The Riccati integration for geodesic-circle curvature blew up before the target radius.
class ConjugatePointError : public std::runtime_error {
public:
  ConjugatePointError(const std::string& what, double radius)
      : std::runtime_error(what), radius_(radius) {}
  double blowup_radius() const noexcept { return radius_; }

private:
  double radius_;
};

/// Invalid experiment configuration (reported before any computation starts).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace geonodal
