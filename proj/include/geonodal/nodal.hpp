#pragma once

#include "geonodal/spectral.hpp"
#include "geonodal/surface.hpp"

#include <array>
#include <optional>
#include <vector>

namespace geonodal {

/// Vertices with |u| at or below this fraction of max|u| count as exact zeros.
inline constexpr double kZeroThreshold = 1e-12;

struct NodalSet {
  SurfacePtr surface;
  std::vector<ContourSegment> segments;  ///< sorted by triangle
  std::vector<double> segment_lengths;
  std::vector<int> segment_of_triangle;  ///< -1 where the triangle has no segment
  std::vector<Polyline> polylines;       ///< chained graph
  std::vector<int> graph_degree_ge3;     ///< edge points shared by three or more segments (segment ids)
  double length = 0.0;
  std::vector<double> field;  ///< values used for extraction (after the zero perturbation)
  int perturbed_vertices = 0;
  double perturbation = 0.0;

  bool empty() const { return segments.empty(); }
};

NodalSet extract_nodal_set(const EigenPair& pair);

/// Length inside a region; segments are cut where they leave the region's clip fields.
double nodal_length(const NodalSet& set, const std::optional<Region>& restrict_to = std::nullopt);
/// Exact nodal length of a closed-form family (nullopt for constants and FEM pairs).
std::optional<double> reference_nodal_length(const EigenPair& pair);

struct NodalDomainSet {
  std::vector<int> labels;  ///< per vertex, -1 when the vertex joins no domain
  int count = 0;
  std::vector<double> volumes;
  std::vector<int> signs;
  std::vector<std::vector<int>> vertices;   ///< per domain
  std::vector<std::vector<int>> triangles;  ///< triangles carrying part of the domain
  double epsilon = 0.0;
};

NodalDomainSet nodal_domains(const EigenPair& pair, double epsilon);

struct BallZeroReport {
  bool holds = true;
  int worst_center = -1;  ///< vertex id
  double worst_margin = 0.0;  ///< distance to the nodal set minus radius (> 0 means violation)
  int centers_tested = 0;
  int violations = 0;
};

/// Tests sampled vertex centers (evenly strided ids plus the extremum of every nodal domain).
BallZeroReport zero_in_every_ball(const EigenPair& pair, double radius, int sample_centers);

struct TubularNeighborhood {
  Region region;  ///< triangles with min|u| <= eta; clip fields u - eta and -u - eta
  double area = 0.0;           ///< area of {|u| <= eta}
  double triangle_area = 0.0;  ///< area of the triangle subset
  double eta = 0.0;
};

TubularNeighborhood tubular_neighborhood(const EigenPair& pair, double eta);

struct SingularPoint {
  Vec3 position;
  SurfacePoint location;
  int multiplicity = 0;
  double gradient = 0.0;  ///< FEM gradient magnitude at the seed crossing
  std::array<double, 5> degree_mass{};
};

struct SingularPointSet {
  std::vector<SingularPoint> points;
  double threshold = 0.0;
  int candidates = 0;  ///< clustered candidates before the multiplicity filter
};

SingularPointSet singular_points(const NodalSet& set, const EigenPair& pair, double eta);

}  // namespace geonodal
