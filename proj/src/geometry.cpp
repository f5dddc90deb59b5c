// Distance fields, level-set contours, geodesic balls, curvature.
#include "geonodal/errors.hpp"
#include "geonodal/surface.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <set>
#include <unordered_map>

namespace geonodal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_point(const Surface& s, const SurfacePoint& p) {
  if (p.triangle < 0 || static_cast<std::size_t>(p.triangle) >= s.triangle_count())
    throw DomainError("surface point references a missing triangle");
  double sum = 0.0;
  for (double b : p.bary) {
    if (!(b >= -1e-9)) throw DomainError("surface point has a negative barycentric weight");
    sum += b;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("surface point barycentric weights must sum to 1");
}

// Planar update of corner c from corners a, b carrying distances da, db. Returns +inf when
// the virtual source does not see c through the segment ab.
double unfold_update(const Vec3& a, const Vec3& b, const Vec3& c, double da, double db) {
  const Vec3 ab = b - a;
  const double len = ab.norm();
  if (len <= 0) return kInf;
  const Vec3 ex = ab / len;
  const Vec3 ac = c - a;
  const double cx = ac.dot(ex);
  const double cy = (ac - cx * ex).norm();
  if (cy <= 0) return kInf;
  const double sx = (da * da - db * db + len * len) / (2.0 * len);
  const double sy2 = da * da - sx * sx;
  if (sy2 < 0) return kInf;
  const double sy = -std::sqrt(sy2);
  const double cross_x = sx + (cx - sx) * (-sy) / (cy - sy);
  if (cross_x < 0 || cross_x > len) return kInf;
  const double dc = std::hypot(cx - sx, cy - sy);
  return dc >= std::max(da, db) ? dc : kInf;
}

DistanceField marching_distance(const Surface& s, const SurfacePoint& source, double cutoff) {
  const std::size_t n = s.vertex_count();
  DistanceField field{source, std::vector<double>(n, kInf), DistanceMethod::graph_marching, cutoff};
  auto& d = field.values;
  std::vector<char> done(n, 0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  {
    const auto c = s.corners(source.triangle);
    const Vec3 p = source.bary[0] * c[0] + source.bary[1] * c[1] + source.bary[2] * c[2];
    const auto& tri = s.triangles()[source.triangle];
    for (int k = 0; k < 3; ++k) {
      const double v = (c[k] - p).norm();
      if (v < d[tri[k]]) {
        d[tri[k]] = v;
        heap.emplace(v, tri[k]);
      }
    }
  }
  const auto& verts = s.vertices();
  while (!heap.empty()) {
    auto [dv, v] = heap.top();
    heap.pop();
    if (done[v] || dv > d[v]) continue;
    if (dv > cutoff) break;
    done[v] = 1;
    for (int w : s.vertex_neighbors()[v]) {
      if (done[w]) continue;
      const double cand = dv + s.edge_length(v, w);
      if (cand < d[w]) {
        d[w] = cand;
        heap.emplace(cand, w);
      }
    }
    for (int t : s.vertex_triangles()[v]) {
      const auto& tri = s.triangles()[t];
      const auto c = s.corners(t);
      for (int k = 0; k < 3; ++k) {
        const int target = tri[k];
        if (done[target]) continue;
        const int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
        if (!done[a] || !done[b]) continue;
        const double cand = unfold_update(c[(k + 1) % 3], c[(k + 2) % 3], c[k], d[a], d[b]);
        if (cand < d[target]) {
          d[target] = cand;
          heap.emplace(cand, target);
        }
      }
    }
    (void)verts;
  }
  for (std::size_t v = 0; v < n; ++v)
    if (!done[v] && d[v] > cutoff) d[v] = kInf;
  return field;
}

}  // namespace

DistanceField geodesic_distance(const Surface& surface, const SurfacePoint& source, double cutoff) {
  check_point(surface, source);
  if (!surface.has_closed_form()) return marching_distance(surface, source, cutoff);
  DistanceField field{source, std::vector<double>(surface.vertex_count(), kInf), DistanceMethod::exact,
                      cutoff};
  const Vec3 p = surface.exact_position(source);
  const auto& verts = surface.vertices();
  auto assign = [&](int v) {
    const double dist = surface.exact_distance(p, verts[v]);
    if (dist <= cutoff) field.values[v] = dist;
  };
  if (std::isinf(cutoff)) {
    for (std::size_t v = 0; v < verts.size(); ++v) assign(static_cast<int>(v));
  } else {
    // chord <= arc, so a Euclidean query of the same radius finds every candidate
    surface.for_each_vertex_near(p, cutoff, assign);
  }
  return field;
}

// ---------------------------------------------------------------------------
// Contours

std::vector<ContourSegment> contour_segments(const Surface& surface, std::span<const double> f,
                                             double level, std::span<const int> subset) {
  if (f.size() != surface.vertex_count()) throw DomainError("field size does not match vertex count");
  std::vector<ContourSegment> out;
  const auto& tris = surface.triangles();
  const std::size_t count = subset.empty() ? tris.size() : subset.size();
  for (std::size_t idx = 0; idx < count; ++idx) {
    const std::size_t t = subset.empty() ? idx : static_cast<std::size_t>(subset[idx]);
    const auto& tri = tris[t];
    std::array<bool, 3> above{};
    for (int k = 0; k < 3; ++k) above[k] = f[tri[k]] >= level;
    if (above[0] == above[1] && above[1] == above[2]) continue;
    std::array<EdgePoint, 2> pts;
    int found = 0;
    for (int k = 0; k < 3; ++k) {
      const int i = tri[(k + 1) % 3], j = tri[(k + 2) % 3];
      if (above[(k + 1) % 3] == above[(k + 2) % 3]) continue;
      const int v0 = std::min(i, j), v1 = std::max(i, j);
      const double t01 = (level - f[v0]) / (f[v1] - f[v0]);
      pts[found++] = EdgePoint{v0, v1, std::clamp(t01, 0.0, 1.0)};
    }
    // orientation: tangent = n x grad f
    const auto c = surface.corners(static_cast<int>(t));
    const Vec3 n = (c[1] - c[0]).cross(c[2] - c[0]);
    const double twice_area = n.norm();
    const Vec3 nhat = n / twice_area;
    Vec3 grad = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      const Vec3 e = c[(k + 2) % 3] - c[(k + 1) % 3];
      grad += f[tri[k]] * nhat.cross(e) / twice_area;
    }
    const Vec3 tangent = nhat.cross(grad);
    auto local = [&](const EdgePoint& e) {
      Vec3 pa, pb;
      for (int k = 0; k < 3; ++k) {
        if (tri[k] == e.v0) pa = c[k];
        if (tri[k] == e.v1) pb = c[k];
      }
      return Vec3((1 - e.t) * pa + e.t * pb);
    };
    ContourSegment seg{static_cast<int>(t), pts[0], pts[1]};
    if ((local(pts[1]) - local(pts[0])).dot(tangent) < 0) std::swap(seg.a, seg.b);
    out.push_back(seg);
  }
  return out;
}

std::vector<Polyline> chain_contour(const Surface& surface, std::span<const ContourSegment> segs) {
  auto key = [](const EdgePoint& e) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.v0)) << 32) |
           static_cast<std::uint32_t>(e.v1);
  };
  std::unordered_map<std::uint64_t, int> starts;  // edge -> segment starting there
  starts.reserve(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) starts.emplace(key(segs[i].a), static_cast<int>(i));
  std::unordered_map<std::uint64_t, int> ends;
  for (std::size_t i = 0; i < segs.size(); ++i) ends.emplace(key(segs[i].b), static_cast<int>(i));

  std::vector<char> used(segs.size(), 0);
  std::vector<Polyline> out;
  // Process segments ordered by their lowest edge vertex so that loop starts are canonical.
  std::vector<int> order(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    const auto& ex = segs[x].a;
    const auto& ey = segs[y].a;
    if (ex.v0 != ey.v0) return ex.v0 < ey.v0;
    if (ex.v1 != ey.v1) return ex.v1 < ey.v1;
    return x < y;
  });
  for (int first : order) {
    if (used[first]) continue;
    // walk backwards to the start of an open chain, if any
    int start = first;
    for (;;) {
      auto it = ends.find(key(segs[start].a));
      if (it == ends.end() || used[it->second] || it->second == first) break;
      start = it->second;
    }
    Polyline line;
    Vec3 cursor = surface.edge_point_position(segs[start].a);
    line.points.push_back(cursor);
    line.locations.push_back(surface.edge_point(segs[start].a));
    int cur = start;
    while (cur >= 0 && !used[cur]) {
      used[cur] = 1;
      const Vec3 next = surface.edge_point_position(segs[cur].b);
      cursor = cursor + surface.displacement(surface.wrap(cursor), next);
      line.points.push_back(cursor);
      line.locations.push_back(surface.edge_point(segs[cur].b));
      auto it = starts.find(key(segs[cur].b));
      cur = it == starts.end() ? -1 : it->second;
      if (cur == start) {
        line.closed = true;
        break;
      }
    }
    out.push_back(std::move(line));
  }
  return out;
}

double sublevel_area(const Surface& surface, std::span<const double> f, double level,
                     std::span<const int> triangles) {
  const auto& tris = surface.triangles();
  auto one = [&](int t) {
    const auto& tri = tris[t];
    const double area = surface.triangle_area(t);
    std::array<double, 3> g{f[tri[0]] - level, f[tri[1]] - level, f[tri[2]] - level};
    int below = 0;
    for (double x : g) below += x <= 0 ? 1 : 0;
    if (below == 0) return 0.0;
    if (below == 3) return area;
    // isolate the odd corner
    const bool odd_is_below = below == 1;
    int k = 0;
    for (int i = 0; i < 3; ++i)
      if ((g[i] <= 0) == odd_is_below) k = i;
    const double gk = g[k];
    const double t1 = gk / (gk - g[(k + 1) % 3]);
    const double t2 = gk / (gk - g[(k + 2) % 3]);
    const double corner = area * t1 * t2;
    return odd_is_below ? corner : area - corner;
  };
  double total = 0.0;
  if (triangles.empty()) {
    for (std::size_t t = 0; t < tris.size(); ++t) total += one(static_cast<int>(t));
  } else {
    for (int t : triangles) total += one(t);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Balls

GeodesicBall geodesic_ball(const Surface& surface, const SurfacePoint& center, double radius) {
  if (radius < 0 || !std::isfinite(radius)) throw DomainError("ball radius must be finite and >= 0");
  check_point(surface, center);
  GeodesicBall ball;
  if (radius == 0) return ball;
  const double cutoff = radius + 2.0 * surface.max_edge_length();
  ball.distance = geodesic_distance(surface, center, cutoff);
  const auto& d = ball.distance.values;
  // finite stand-in outside the cutoff keeps the contour well defined
  std::vector<double> g(d.size());
  for (std::size_t v = 0; v < d.size(); ++v) g[v] = std::isinf(d[v]) ? cutoff : d[v];
  const auto& tris = surface.triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& tri = tris[t];
    if ((g[tri[0]] + g[tri[1]] + g[tri[2]]) / 3.0 <= radius) ball.region.triangles.push_back(static_cast<int>(t));
  }
  for (std::size_t v = 0; v < d.size(); ++v)
    if (d[v] <= radius) ball.vertices.push_back(static_cast<int>(v));
  ball.area = sublevel_area(surface, g, radius);
  const auto segs = contour_segments(surface, g, radius);
  ball.boundary = chain_contour(surface, segs);
  for (const auto& p : ball.boundary) ball.boundary_length += p.length();

  // Disk test: the covered subcomplex should have Euler characteristic 1.
  std::set<int> vs, es;
  for (int t : ball.region.triangles)
    for (int k = 0; k < 3; ++k) {
      vs.insert(tris[t][k]);
      es.insert(surface.edge_id(tris[t][(k + 1) % 3], tris[t][(k + 2) % 3]));
    }
  const long chi = static_cast<long>(vs.size()) - static_cast<long>(es.size()) +
                   static_cast<long>(ball.region.triangles.size());
  double injectivity = kInf;
  if (surface.kind() == SurfaceKind::unit_sphere) injectivity = std::numbers::pi;
  if (surface.kind() == SurfaceKind::flat_torus)
    injectivity = 0.5 * std::min(surface.period_u(), surface.period_v());
  ball.may_self_overlap = radius >= injectivity || (!ball.region.triangles.empty() && chi != 1);
  return ball;
}

// ---------------------------------------------------------------------------
// Curvature

double angle_defect(const Surface& surface, int vertex) {
  double sum = 0.0;
  for (int t : surface.vertex_triangles()[vertex]) {
    const auto& tri = surface.triangles()[t];
    const auto c = surface.corners(t);
    int k = 0;
    while (tri[k] != vertex) ++k;
    const Vec3 e1 = c[(k + 1) % 3] - c[k], e2 = c[(k + 2) % 3] - c[k];
    sum += std::atan2(e1.cross(e2).norm(), e1.dot(e2));
  }
  return 2.0 * std::numbers::pi - sum;
}

CurvatureSample gaussian_curvature(const Surface& surface, int vertex) {
  if (vertex < 0 || static_cast<std::size_t>(vertex) >= surface.vertex_count())
    throw DomainError("vertex index out of range");
  switch (surface.kind()) {
    case SurfaceKind::unit_sphere: return {1.0, vertex};
    case SurfaceKind::flat_torus: return {0.0, vertex};
    case SurfaceKind::triangle_mesh: break;
  }
  // mixed Voronoi area
  double area = 0.0;
  for (int t : surface.vertex_triangles()[vertex]) {
    const auto& tri = surface.triangles()[t];
    const auto c = surface.corners(t);
    int k = 0;
    while (tri[k] != vertex) ++k;
    const Vec3& p = c[k];
    const Vec3& q = c[(k + 1) % 3];
    const Vec3& r = c[(k + 2) % 3];
    auto angle = [](const Vec3& at, const Vec3& x, const Vec3& y) {
      const Vec3 a = x - at, b = y - at;
      return std::atan2(a.cross(b).norm(), a.dot(b));
    };
    const double ap = angle(p, q, r), aq = angle(q, r, p), ar = angle(r, p, q);
    const double ta = surface.triangle_area(t);
    constexpr double right = std::numbers::pi / 2;
    if (ap > right) {
      area += ta / 2;
    } else if (aq > right || ar > right) {
      area += ta / 4;
    } else {
      area += ((p - r).squaredNorm() / std::tan(aq) + (p - q).squaredNorm() / std::tan(ar)) / 8.0;
    }
  }
  if (!(area > 0)) throw GeometryError("vertex star has zero area");
  return {angle_defect(surface, vertex) / area, vertex};
}

std::vector<double> gaussian_curvature_field(const Surface& surface) {
  std::vector<double> k(surface.vertex_count());
  for (std::size_t v = 0; v < k.size(); ++v) k[v] = gaussian_curvature(surface, static_cast<int>(v)).gaussian;
  return k;
}

// ---------------------------------------------------------------------------
// Riccati equation h' = -h^2 - K(s), Dormand-Prince 5(4) with adaptive steps.

double geodesic_circle_curvature(const std::function<double(double)>& curvature_along_ray, double r,
                                 double r0, std::optional<double> h0, double tolerance) {
  if (!(r0 > 0) || !(r0 <= r)) throw DomainError("Riccati integration needs 0 < r0 <= r");
  if (!(tolerance > 0)) throw DomainError("Riccati tolerance must be positive");
  double h = h0.value_or(1.0 / r0);
  if (!std::isfinite(h)) throw DomainError("Riccati seed must be finite");
  auto rhs = [&](double s, double y) { return -y * y - curvature_along_ray(s); };
  const double blowup = 1.0 / tolerance;
  double s = r0;
  double step = std::max((r - r0) * 1e-3, 1e-12);
  if (std::abs(h) > 0) step = std::min(step, 0.01 / std::abs(h));

  static constexpr double a21 = 1.0 / 5, a31 = 3.0 / 40, a32 = 9.0 / 40, a41 = 44.0 / 45,
                          a42 = -56.0 / 15, a43 = 32.0 / 9, a51 = 19372.0 / 6561,
                          a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729,
                          a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656, b1 = 35.0 / 384,
                          b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84,
                          e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  for (long iter = 0; s < r; ++iter) {
    if (iter > 50'000'000) throw SolverError("Riccati integration exceeded its step budget");
    if (s + step > r) step = r - s;
    const double k1 = rhs(s, h);
    const double k2 = rhs(s + step / 5, h + step * a21 * k1);
    const double k3 = rhs(s + 3 * step / 10, h + step * (a31 * k1 + a32 * k2));
    const double k4 = rhs(s + 4 * step / 5, h + step * (a41 * k1 + a42 * k2 + a43 * k3));
    const double k5 = rhs(s + 8 * step / 9, h + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const double k6 = rhs(s + step, h + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const double next = h + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const double k7 = rhs(s + step, next);
    const double err = std::abs(step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7));
    const double scale = tolerance * (1.0 + std::max(std::abs(h), std::abs(next)));
    if (std::isfinite(next) && err <= scale) {
      s += step;
      h = next;
      if (std::abs(h) > blowup)
        throw ConjugatePointError("geodesic circle curvature blew up (conjugate point)", s);
    }
    if (!std::isfinite(next) && step < 1e-14 * std::max(1.0, s))
      throw ConjugatePointError("geodesic circle curvature blew up (conjugate point)", s);
    const double factor = err > 0 ? 0.9 * std::pow(scale / err, 0.2) : 5.0;
    step *= std::clamp(std::isfinite(factor) ? factor : 0.1, 0.1, 5.0);
    if (step < 1e-15 * std::max(1.0, s)) {
      if (std::abs(h) > 1e-3 * blowup) throw ConjugatePointError("geodesic circle curvature blew up (conjugate point)", s);
      step = 1e-15 * std::max(1.0, s);
    }
  }
  return h;
}

}  // namespace geonodal
