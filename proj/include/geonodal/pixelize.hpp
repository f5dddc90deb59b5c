#pragma once

#include "geonodal/nodal.hpp"
#include "geonodal/surface.hpp"

#include <span>
#include <vector>

namespace geonodal {

struct CenterCluster {
  SurfacePtr surface;
  std::vector<Vec3> centers;
  std::vector<SurfacePoint> locations;
  double spacing = 0.0;
  int generation = 0;
};

/// Greedy net on the chained nodal polylines: walk them in order and accept the first
/// point at distance >= spacing from every accepted center.
CenterCluster select_centers(const NodalSet& set, double spacing);

struct RadiusRule {
  double uniform = 0.0;
  std::vector<double> per_center;  ///< overrides `uniform` when nonempty

  static RadiusRule fixed(double r) { return RadiusRule{r, {}}; }
  static RadiusRule listed(std::vector<double> radii) { return RadiusRule{0.0, std::move(radii)}; }
  /// 1.2 x spacing.
  static RadiusRule standard(const CenterCluster& cluster) { return fixed(1.2 * cluster.spacing); }
};

struct Front {
  int pixel = -1;
  int ball = -1;
  double radius = 0.0;
  Polyline arc;
  std::vector<double> s;  ///< arclength at each sample
  std::vector<double> h;  ///< geodesic curvature of the circle at each sample
  double tension = 0.0;   ///< t(F)
  bool undersampled = false;
};

struct Pixel {
  std::vector<int> signature;
  std::vector<int> triangles;
  double area = 0.0;
  std::vector<int> fronts;
  double curvature_ratio = 0.0;  ///< r(P)
  bool contains_center = false;
};

struct PixelDecomposition {
  SurfacePtr surface;
  CenterCluster cluster;
  std::vector<double> radii;
  std::vector<int> pixel_of_triangle;  ///< -1 when uncovered
  std::vector<Pixel> pixels;           ///< ordered by signature
  std::vector<Front> fronts;
  std::vector<int> uncovered;
  double uncovered_area = 0.0;
  int max_signature = 0;
  int oversized_signatures = 0;  ///< pixels whose signature exceeds 3 balls
  double tension_epsilon_rel = 1e-12;
  double ratio_epsilon_rel = 1e-9;

  Region region(int pixel) const { return Region{pixels[static_cast<std::size_t>(pixel)].triangles, {}}; }
};

PixelDecomposition build_pixels(SurfacePtr surface, const CenterCluster& cluster, const RadiusRule& rule);

/// max |dh/ds|^2 / (h^2 + eps^2), eps = 1e-12 max|h|; central differences in s.
double front_tension(std::span<const double> s, std::span<const double> h);

/// max over triangles of |grad R|^2 / (|R|^3 + eps^3), R = 2K, eps = 1e-9 max|R|.
double pixel_curvature_ratio(const Surface& surface, std::span<const int> triangles,
                             std::span<const double> gaussian_curvature);

struct ConditionResult {
  bool holds = true;
  std::vector<int> failed_fronts;  ///< indices into the pixel's front list
  bool ratio_failed = false;
};

/// (eta, mu) condition: t(F_l) <= eta_l for every front and r(P) <= mu.
ConditionResult check_condition(const PixelDecomposition& decomposition, int pixel, std::span<const double> eta,
                                double mu);

}  // namespace geonodal
