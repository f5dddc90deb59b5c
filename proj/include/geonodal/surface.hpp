#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace geonodal {

using Vec3 = Eigen::Vector3d;
using Tri = std::array<int, 3>;

enum class SurfaceKind { unit_sphere, flat_torus, triangle_mesh };

/// A point on a triangulated surface: containing triangle plus barycentric weights.
struct SurfacePoint {
  int triangle = -1;
  std::array<double, 3> bary{1.0, 0.0, 0.0};
};

/// Point on a mesh edge, (1 - t) * v0 + t * v1 with v0 < v1.
struct EdgePoint {
  int v0 = -1;
  int v1 = -1;
  double t = 0.0;

  friend bool operator==(const EdgePoint&, const EdgePoint&) = default;
};

struct Edge {
  int a = -1;
  int b = -1;
  std::array<int, 2> triangles{-1, -1};
};

/// Triangle subset, optionally cut further by per-vertex fields (inside where every field <= 0).
struct Region {
  std::vector<int> triangles;
  std::vector<std::vector<double>> clip_fields;
};

class Surface;
using SurfacePtr = std::shared_ptr<const Surface>;

/// Closed, oriented, manifold triangulated surface. The unit sphere and the flat torus
/// carry a triangulation for sampling plus their exact metric; a plain triangle mesh
/// only has its polyhedral metric.
///
/// Flat torus vertices live in the chart [0, period_u) x [0, period_v) x {0}; every
/// geometric query goes through displacement(), which applies the minimum-image rule.
class Surface {
public:
  static SurfacePtr unit_sphere(int subdivision);
  static SurfacePtr flat_torus(double period_u, double period_v, int cells_u, int cells_v);
  /// Flat torus triangulated on explicit coordinate lines (strictly increasing, first = 0).
  static SurfacePtr flat_torus(double period_u, double period_v, std::vector<double> u_lines,
                               std::vector<double> v_lines);
  static SurfacePtr triangle_mesh(std::vector<Vec3> vertices, std::vector<Tri> triangles);

  SurfaceKind kind() const noexcept { return kind_; }
  bool has_closed_form() const noexcept { return kind_ != SurfaceKind::triangle_mesh; }
  double period_u() const noexcept { return period_u_; }
  double period_v() const noexcept { return period_v_; }

  std::size_t vertex_count() const noexcept { return vertices_.size(); }
  std::size_t triangle_count() const noexcept { return triangles_.size(); }
  const std::vector<Vec3>& vertices() const noexcept { return vertices_; }
  const std::vector<Tri>& triangles() const noexcept { return triangles_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::vector<int>>& vertex_neighbors() const noexcept { return neighbors_; }
  const std::vector<std::vector<int>>& vertex_triangles() const noexcept { return vertex_tris_; }

  /// Edge index of {a, b}, or -1.
  int edge_id(int a, int b) const;
  /// Triangle across local edge k (opposite corner k) of triangle t.
  int triangle_across(int t, int k) const;

  /// Vector from `from` to `to`; minimum image on the torus.
  Vec3 displacement(const Vec3& from, const Vec3& to) const;
  /// Canonical chart representative (torus) or the point itself.
  Vec3 wrap(const Vec3& p) const;
  /// Triangle corners in one consistent (unwrapped) frame anchored at corner 0.
  std::array<Vec3, 3> corners(int t) const;
  Vec3 position(const SurfacePoint& p) const;
  /// Position pushed onto the exact surface (normalized on the sphere).
  Vec3 exact_position(const SurfacePoint& p) const;
  SurfacePoint vertex_point(int v) const;
  SurfacePoint edge_point(const EdgePoint& e) const;
  Vec3 edge_point_position(const EdgePoint& e) const;

  Vec3 triangle_normal(int t) const;
  Vec3 vertex_normal(int v) const;
  double triangle_area(int t) const { return areas_[static_cast<std::size_t>(t)]; }
  const std::vector<double>& triangle_areas() const noexcept { return areas_; }
  double total_area() const noexcept { return total_area_; }
  /// Lumped (barycentric) vertex area: one third of the incident triangle areas.
  const std::vector<double>& vertex_areas() const noexcept { return vertex_areas_; }
  double mean_edge_length() const noexcept { return mean_edge_; }
  double max_edge_length() const noexcept { return max_edge_; }
  double edge_length(int a, int b) const { return displacement(vertices_[a], vertices_[b]).norm(); }
  int euler_characteristic() const;
  /// Intrinsic diameter (exact for sphere/torus, marching estimate for meshes).
  double diameter() const;

  /// Exact geodesic distance between two surface positions (sphere and torus only).
  double exact_distance(const Vec3& a, const Vec3& b) const;

  /// Visit vertices whose (minimum-image) Euclidean distance to p is <= radius.
  void for_each_vertex_near(const Vec3& p, double radius, const std::function<void(int)>& fn) const;
  /// Closest point of the triangulation to p.
  SurfacePoint locate(const Vec3& p) const;

private:
  Surface() = default;
  void finalize();
  void build_vertex_grid();
  std::array<int, 3> cell_of(const Vec3& p) const;

  SurfaceKind kind_ = SurfaceKind::triangle_mesh;
  double period_u_ = 0.0;
  double period_v_ = 0.0;
  std::vector<Vec3> vertices_;
  std::vector<Tri> triangles_;
  std::vector<Edge> edges_;
  std::unordered_map<std::uint64_t, int> edge_lookup_;
  std::vector<std::array<int, 3>> tri_edges_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::vector<int>> vertex_tris_;
  std::vector<double> areas_;
  std::vector<double> vertex_areas_;
  double total_area_ = 0.0;
  double mean_edge_ = 0.0;
  double max_edge_ = 0.0;
  mutable double diameter_ = -1.0;

  // uniform vertex grid
  Vec3 grid_origin_ = Vec3::Zero();
  std::array<double, 3> grid_cell_{1.0, 1.0, 1.0};
  std::array<int, 3> grid_dims_{1, 1, 1};
  std::vector<int> grid_start_;
  std::vector<int> grid_items_;
};

// ---------------------------------------------------------------------------
// Distances and balls

enum class DistanceMethod { exact, graph_marching };

struct DistanceField {
  SurfacePoint source;
  std::vector<double> values;  ///< +inf beyond `cutoff`
  DistanceMethod method = DistanceMethod::exact;
  double cutoff = std::numeric_limits<double>::infinity();
};

/// Geodesic distance from `source` to every vertex. Exact on sphere/torus; on meshes a
/// Dijkstra pass whose relaxations include planar triangle-unfolding updates.
/// Vertices farther than `cutoff` are left at +inf.
DistanceField geodesic_distance(const Surface& surface, const SurfacePoint& source,
                                double cutoff = std::numeric_limits<double>::infinity());

/// Closed polylines repeat their first point (in the continuous frame) at the end.
struct Polyline {
  std::vector<Vec3> points;  ///< continuous frame (unwrapped across torus seams)
  std::vector<SurfacePoint> locations;
  bool closed = false;
  double length() const;
};

/// Marching-triangles segment of a level set, oriented so that the field increases to the right.
struct ContourSegment {
  int triangle = -1;
  EdgePoint a;
  EdgePoint b;
};

/// Level set {f = level} of the piecewise-linear field. Vertices with f == level count as above.
/// An optional triangle subset (ascending) restricts the scan.
std::vector<ContourSegment> contour_segments(const Surface& surface, std::span<const double> f,
                                             double level, std::span<const int> subset = {});
/// Chain segments into polylines; loops start at the lowest-indexed edge vertex.
std::vector<Polyline> chain_contour(const Surface& surface, std::span<const ContourSegment> segs);
/// Area of {f <= level} under linear interpolation.
double sublevel_area(const Surface& surface, std::span<const double> f, double level,
                     std::span<const int> triangles = {});

struct GeodesicBall {
  Region region;                ///< triangles whose centroid lies within the radius
  std::vector<int> vertices;    ///< vertices with d <= radius
  double area = 0.0;            ///< area of {d <= radius}, linear interpolation
  std::vector<Polyline> boundary;
  double boundary_length = 0.0;
  bool may_self_overlap = false;
  DistanceField distance;
};

GeodesicBall geodesic_ball(const Surface& surface, const SurfacePoint& center, double radius);

// ---------------------------------------------------------------------------
// Curvature

struct CurvatureSample {
  double gaussian = 0.0;
  int vertex = -1;
  double scalar() const { return 2.0 * gaussian; }
};

/// Closed form on sphere/torus; angle defect over mixed Voronoi area on meshes.
CurvatureSample gaussian_curvature(const Surface& surface, int vertex);
std::vector<double> gaussian_curvature_field(const Surface& surface);
/// 2*pi minus the sum of corner angles at v (polyhedral metric).
double angle_defect(const Surface& surface, int vertex);

/// Curvature of the geodesic circle of radius r, from h' = -h^2 - K(s) integrated on [r0, r].
/// The seed defaults to the flat asymptote 1/r0. Throws ConjugatePointError on blow-up.
double geodesic_circle_curvature(const std::function<double(double)>& curvature_along_ray,
                                 double r, double r0, std::optional<double> h0 = std::nullopt,
                                 double tolerance = 1e-9);

}  // namespace geonodal
