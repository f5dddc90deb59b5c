#pragma once

#include "geonodal/nodal.hpp"
#include "geonodal/pixelize.hpp"
#include "geonodal/spectral.hpp"

#include <span>
#include <utility>
#include <vector>

namespace geonodal {

/// Area-weighted average of the incident triangle gradients.
std::vector<Vec3> vertex_gradients(const EigenPair& pair);
/// Spectral norm of the Hessian recovered from the one-ring triangle gradients (affine
/// least-squares fit in the tangent plane).
std::vector<double> vertex_hessians(const EigenPair& pair);

/// Boundary length of a triangle subset (edges with exactly one triangle in the subset).
double region_boundary_length(const Surface& surface, std::span<const int> triangles);
double region_area(const Surface& surface, std::span<const int> triangles);

struct DongBound {
  int region_id = -1;
  double integral_term = 0.0;  ///< (1/2) int |grad log q_eps|
  double volume_term = 0.0;    ///< sqrt(n lambda) vol
  double boundary_term = 0.0;  ///< vol(boundary)
  double total = 0.0;
  double eps_rel = 0.0;
  double regularization = 0.0;  ///< (eps_rel max q)^2 added to q
  double extracted_length = 0.0;
  double area = 0.0;

  bool dominates() const { return total >= extracted_length; }
  double ratio() const { return extracted_length > 0 ? total / extracted_length : 0.0; }
};

/// Precomputes q = |grad u|^2 + (lambda/n) u^2 and the per-triangle log-gradients so that many
/// regions of one eigenpair can be bounded cheaply.
class DongEvaluator {
public:
  DongEvaluator(const EigenPair& pair, double eps_rel, int dimension = 2);

  DongBound evaluate(const Region& region, const NodalSet& set, int region_id = -1) const;
  const std::vector<double>& q() const { return q_; }
  double regularization() const { return reg_; }

private:
  const EigenPair* pair_;
  double eps_rel_;
  int dimension_;
  double reg_ = 0.0;
  std::vector<double> q_;
  std::vector<double> integrand_;  ///< area * |grad log q_eps| per triangle
};

DongBound dong_upper_bound(const EigenPair& pair, const Region& region, double eps_rel, int dimension = 2);

enum class DensityPixels { containing_center, meeting_nodal_set };

struct DensityStats {
  std::vector<int> pixels;     ///< pixel ids included
  std::vector<double> values;  ///< sqrt(lambda) * length(N cap P), same order
  double min = 0.0;
  double median = 0.0;
  double max = 0.0;
  int excluded = 0;
};

DensityStats lower_bound_density(const EigenPair& pair, const PixelDecomposition& decomposition,
                                 const NodalSet& set, DensityPixels rule = DensityPixels::containing_center);

struct ScalingFit {
  std::vector<std::pair<double, double>> samples;  ///< (lambda, length)
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  ///< rms of log residuals
};

ScalingFit scaling_fit(std::vector<std::pair<double, double>> samples);

struct HarnackRecord {
  int pixel = -1;
  double epsilon = 0.0;
  int component = -1;  ///< -1 marks an empty P_eps
  int vertex_count = 0;
  double c20 = 0.0;
  double grad_sup = 0.0, grad_inf = 0.0;
  double hess_sup = 0.0, hess_inf = 0.0;
  double log_gradient_ratio = 0.0;  ///< int zeta^2 |grad log(|u|+eps)|^2 / int (|grad zeta|^2 + zeta^2)
  bool empty = false;
};

struct FrontHarnackRecord {
  int front = -1;
  double epsilon = 0.0;
  int samples = 0;
  double c30 = 0.0;
  double grad_sup = 0.0, grad_inf = 0.0;
  bool empty = false;
};

struct HarnackReport {
  std::vector<double> eps_grid;
  std::vector<HarnackRecord> records;  ///< ordered by (pixel, epsilon, component)
  std::vector<FrontHarnackRecord> front_records;
  int empty_records = 0;
};

HarnackReport harnack_ratios(const EigenPair& pair, const PixelDecomposition& decomposition,
                             std::span<const double> eps_grid);

struct BernsteinRatios {
  double grad_ratio = 0.0;  ///< sup |grad u| / (sqrt(lambda) (|u| + eps))
  double hess_ratio = 0.0;  ///< sup |hess u| / (lambda (|u| + eps))
  /// The same suprema under the lambda^(n/2 + 1) normalization.
  double grad_ratio_power = 0.0;
  double hess_ratio_power = 0.0;
};

BernsteinRatios bernstein_ratios(const EigenPair& pair, const Region& region, double eps, int dimension = 2);

struct DomainEigencheck {
  bool skipped = false;
  int interior_vertices = 0;
  double lambda1_dirichlet = 0.0;
  double relative_gap = 0.0;
  double area = 0.0;
  double boundary_length = 0.0;
  double cheeger_lhs = 0.0;  ///< lambda1 * vol^(2/(n-1))
  double cheeger_rhs = 0.0;  ///< (|boundary| / vol)^2 / 4 * vol^(2/(n-1))
};

DomainEigencheck nodal_domain_eigencheck(const EigenPair& pair, std::span<const int> domain_vertices,
                                         int dimension = 2);
DomainEigencheck nodal_domain_eigencheck(const EigenPair& pair, const NodalDomainSet& domains, int domain,
                                         int dimension = 2);

struct FrontZeros {
  int zero_count = 0;
  double arc_length = 0.0;
  double normalized = 0.0;  ///< k / (sqrt(lambda) len)
  int samples = 0;
};

FrontZeros front_restriction_zeros(const EigenPair& pair, const Polyline& arc);

}  // namespace geonodal
