#pragma once

#include "geonodal/surface.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace geonodal {

enum class EigenSource { closed_form, fem, sampled };
enum class TorusBranch { sine, cosine };

/// Real spherical harmonic: P_l^|m|(cos theta) times cos(m phi) (m >= 0) or sin(|m| phi) (m < 0).
struct SphereMode {
  int l = 0;
  int m = 0;
};
/// Plane wave trig(2 pi (m x / period_u + n y / period_v)).
struct TorusMode {
  int m = 1;
  int n = 0;
  TorusBranch branch = TorusBranch::sine;
};
/// Separable product trig(2 pi m x / period_u) * trig(2 pi n y / period_v).
struct TorusProductMode {
  int m = 1;
  int n = 1;
  TorusBranch branch_u = TorusBranch::sine;
  TorusBranch branch_v = TorusBranch::sine;
};
using ClosedFormFamily = std::variant<SphereMode, TorusMode, TorusProductMode>;

std::string describe(const ClosedFormFamily& family);
double closed_form_eigenvalue(const ClosedFormFamily& family, const Surface& surface);
/// Unnormalized analytic value at a position on the exact surface.
double closed_form_value(const ClosedFormFamily& family, const Surface& surface, const Vec3& p);
/// Tangential gradient of the unnormalized analytic function.
Vec3 closed_form_gradient(const ClosedFormFamily& family, const Surface& surface, const Vec3& p);

/// Eigenvalue plus vertex samples of u with Delta u + lambda u = 0, normalized so that the
/// lumped-mass integral of u^2 is 1.
struct EigenPair {
  SurfacePtr surface;
  double lambda = 0.0;
  std::vector<double> values;
  std::vector<Vec3> gradients;  ///< per triangle, constant gradient of the linear interpolant
  EigenSource source = EigenSource::sampled;
  double residual = 0.0;           ///< fem: ||K u - lambda M u||_2
  double relative_residual = 0.0;  ///< residual / (max(lambda, 1) ||u||_M)
  double normalization = 1.0;      ///< factor applied to the analytic function (closed form)
  std::optional<ClosedFormFamily> family;

  double max_abs() const;
  double value_at(const SurfacePoint& p) const;
  /// Analytic value when the pair comes from a closed form, interpolated value otherwise.
  double evaluate(const Vec3& position) const;
  /// Analytic gradient when available, otherwise the gradient of the containing triangle.
  Vec3 gradient_at(const Vec3& position) const;
};

Vec3 triangle_gradient(const Surface& surface, std::span<const double> values, int triangle);
std::vector<Vec3> triangle_gradients(const Surface& surface, std::span<const double> values);

EigenPair closed_form_eigenpair(const ClosedFormFamily& family, SurfacePtr surface);
/// Wrap arbitrary vertex samples as a pair (e.g. unnormalized test functions).
EigenPair sampled_pair(SurfacePtr surface, double lambda, std::vector<double> values,
                       bool normalize = false);
Vec3 evaluate_gradient(const EigenPair& pair, int triangle);

struct DiscreteOperatorPair {
  SurfacePtr surface;
  Eigen::SparseMatrix<double> stiffness;  ///< cotangent weights, positive semidefinite
  Eigen::VectorXd mass;                   ///< lumped (barycentric) diagonal
  bool ill_conditioned = false;
  std::vector<std::string> warnings;
};

DiscreteOperatorPair assemble_laplacian(SurfacePtr surface);

struct EigenSolverOptions {
  std::uint64_t seed = 20240601;
  double tolerance = 1e-12;  ///< Ritz residual relative to the shift-inverted eigenvalue
  int block_size = 0;        ///< 0: automatic
  int max_basis = 0;         ///< 0: automatic
};

struct GeneralizedEigenResult {
  std::vector<double> values;  ///< ascending
  Eigen::MatrixXd vectors;     ///< M-orthonormal columns
  std::vector<double> residuals;
};

/// `count` eigenpairs of K u = lambda M u nearest above `shift` (M diagonal), by block
/// shift-invert Lanczos with full reorthogonalization and a seeded starting block.
GeneralizedEigenResult shift_invert_lanczos(const Eigen::SparseMatrix<double>& stiffness,
                                            const Eigen::VectorXd& mass, int count, double shift,
                                            const EigenSolverOptions& options = {});

std::vector<EigenPair> solve_eigen(const DiscreteOperatorPair& ops, int count, double shift,
                                   const EigenSolverOptions& options = {});

}  // namespace geonodal
