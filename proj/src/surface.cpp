#include "geonodal/surface.hpp"

#include "geonodal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace geonodal {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

double wrap_coord(double x, double period) {
  double r = std::fmod(x, period);
  if (r < 0) r += period;
  if (r >= period) r -= period;
  return r;
}

// Closest point to p on triangle (a, b, c); returns barycentric weights.
std::array<double, 3> closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                          const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return {1, 0, 0};
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return {0, 1, 0};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const double v = d1 / (d1 - d3);
    return {1 - v, v, 0};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return {0, 0, 1};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const double w = d2 / (d2 - d6);
    return {1 - w, 0, w};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {0, 1 - w, w};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {1 - v - w, v, w};
}

}  // namespace

// ---------------------------------------------------------------------------
// Factories

SurfacePtr Surface::unit_sphere(int subdivision) {
  if (subdivision < 0 || subdivision > 8) throw DomainError("icosphere subdivision must be in [0, 8]");
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                         {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                         {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<Tri> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivision; ++s) {
    std::unordered_map<std::uint64_t, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = edge_key(a, b);
      if (auto it = mid.find(key); it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Tri> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const int a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
      next.push_back({t[0], a, c});
      next.push_back({t[1], b, a});
      next.push_back({t[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  auto s = std::shared_ptr<Surface>(new Surface());
  s->kind_ = SurfaceKind::unit_sphere;
  s->vertices_ = std::move(v);
  s->triangles_ = std::move(f);
  s->finalize();
  return s;
}

SurfacePtr Surface::flat_torus(double period_u, double period_v, int cells_u, int cells_v) {
  if (cells_u < 3 || cells_v < 3) throw DomainError("torus grid needs at least 3 cells per direction");
  std::vector<double> us(static_cast<std::size_t>(cells_u)), vs(static_cast<std::size_t>(cells_v));
  for (int i = 0; i < cells_u; ++i) us[i] = period_u * i / cells_u;
  for (int j = 0; j < cells_v; ++j) vs[j] = period_v * j / cells_v;
  return flat_torus(period_u, period_v, std::move(us), std::move(vs));
}

SurfacePtr Surface::flat_torus(double period_u, double period_v, std::vector<double> u_lines,
                               std::vector<double> v_lines) {
  if (!(period_u > 0) || !(period_v > 0)) throw DomainError("torus periods must be positive");
  auto check = [](const std::vector<double>& lines, double period) {
    if (lines.size() < 3) throw DomainError("torus grid needs at least 3 coordinate lines");
    if (lines.front() != 0.0) throw DomainError("torus coordinate lines must start at 0");
    for (std::size_t i = 1; i < lines.size(); ++i)
      if (!(lines[i] > lines[i - 1])) throw DomainError("torus coordinate lines must increase");
    if (!(lines.back() < period)) throw DomainError("torus coordinate lines must stay below the period");
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const double next = i + 1 < lines.size() ? lines[i + 1] : period;
      if (next - lines[i] >= 0.5 * period) throw DomainError("torus grid cells must be shorter than half a period");
    }
  };
  check(u_lines, period_u);
  check(v_lines, period_v);
  const int nu = static_cast<int>(u_lines.size()), nv = static_cast<int>(v_lines.size());
  auto s = std::shared_ptr<Surface>(new Surface());
  s->kind_ = SurfaceKind::flat_torus;
  s->period_u_ = period_u;
  s->period_v_ = period_v;
  s->vertices_.reserve(static_cast<std::size_t>(nu) * nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) s->vertices_.emplace_back(u_lines[i], v_lines[j], 0.0);
  auto id = [nu, nv](int i, int j) { return ((j % nv + nv) % nv) * nu + ((i % nu + nu) % nu); };
  s->triangles_.reserve(static_cast<std::size_t>(2) * nu * nv);
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      s->triangles_.push_back({a, b, c});
      s->triangles_.push_back({a, c, d});
    }
  s->finalize();
  return s;
}

SurfacePtr Surface::triangle_mesh(std::vector<Vec3> vertices, std::vector<Tri> triangles) {
  if (vertices.empty() || triangles.empty()) throw GeometryError("empty mesh");
  for (const auto& t : triangles)
    for (int k : t)
      if (k < 0 || static_cast<std::size_t>(k) >= vertices.size())
        throw GeometryError("triangle references a missing vertex");
  auto s = std::shared_ptr<Surface>(new Surface());
  s->kind_ = SurfaceKind::triangle_mesh;
  s->vertices_ = std::move(vertices);
  s->triangles_ = std::move(triangles);
  s->finalize();
  return s;
}

// ---------------------------------------------------------------------------
// Topology and cached geometry

void Surface::finalize() {
  const std::size_t nv = vertices_.size(), nt = triangles_.size();
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(nt * 3);
  tri_edges_.assign(nt, {-1, -1, -1});
  edges_.clear();
  edge_lookup_.clear();
  edge_lookup_.reserve(nt * 2);
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = triangles_[t];
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
      throw GeometryError("degenerate triangle " + std::to_string(t));
    for (int k = 0; k < 3; ++k) {
      // local edge k is opposite corner k
      const int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
      const auto dkey = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
                        static_cast<std::uint32_t>(b);
      if (!directed.emplace(dkey, static_cast<int>(t)).second)
        throw GeometryError("mesh is not consistently oriented or not manifold at edge (" +
                            std::to_string(a) + ", " + std::to_string(b) + ")");
      const auto key = edge_key(a, b);
      auto [it, inserted] = edge_lookup_.emplace(key, static_cast<int>(edges_.size()));
      if (inserted) {
        edges_.push_back(Edge{std::min(a, b), std::max(a, b), {static_cast<int>(t), -1}});
      } else {
        auto& e = edges_[static_cast<std::size_t>(it->second)];
        if (e.triangles[1] != -1)
          throw GeometryError("edge shared by more than two triangles");
        e.triangles[1] = static_cast<int>(t);
      }
      tri_edges_[t][k] = it->second;
    }
  }
  for (const auto& e : edges_)
    if (e.triangles[1] == -1)
      throw GeometryError("mesh has a boundary edge (" + std::to_string(e.a) + ", " +
                          std::to_string(e.b) + "); surfaces must be closed");

  neighbors_.assign(nv, {});
  vertex_tris_.assign(nv, {});
  for (const auto& e : edges_) {
    neighbors_[e.a].push_back(e.b);
    neighbors_[e.b].push_back(e.a);
  }
  for (auto& n : neighbors_) std::sort(n.begin(), n.end());
  for (std::size_t t = 0; t < nt; ++t)
    for (int k : triangles_[t]) vertex_tris_[k].push_back(static_cast<int>(t));
  for (std::size_t v = 0; v < nv; ++v)
    if (vertex_tris_[v].empty()) throw GeometryError("isolated vertex " + std::to_string(v));

  areas_.resize(nt);
  vertex_areas_.assign(nv, 0.0);
  total_area_ = 0.0;
  for (std::size_t t = 0; t < nt; ++t) {
    const auto c = corners(static_cast<int>(t));
    const double a = 0.5 * (c[1] - c[0]).cross(c[2] - c[0]).norm();
    if (!(a > 0)) throw GeometryError("triangle " + std::to_string(t) + " has zero area");
    areas_[t] = a;
    total_area_ += a;
    for (int k : triangles_[t]) vertex_areas_[k] += a / 3.0;
  }
  double sum = 0.0;
  max_edge_ = 0.0;
  for (const auto& e : edges_) {
    const double l = edge_length(e.a, e.b);
    sum += l;
    max_edge_ = std::max(max_edge_, l);
  }
  mean_edge_ = sum / static_cast<double>(edges_.size());
  build_vertex_grid();
  if (kind_ == SurfaceKind::triangle_mesh) {
    auto first = geodesic_distance(*this, vertex_point(0));
    const auto far = std::max_element(first.values.begin(), first.values.end()) - first.values.begin();
    auto second = geodesic_distance(*this, vertex_point(static_cast<int>(far)));
    diameter_ = *std::max_element(second.values.begin(), second.values.end());
  }
}

int Surface::edge_id(int a, int b) const {
  auto it = edge_lookup_.find(edge_key(a, b));
  return it == edge_lookup_.end() ? -1 : it->second;
}

int Surface::triangle_across(int t, int k) const {
  const auto& e = edges_[static_cast<std::size_t>(tri_edges_[t][k])];
  return e.triangles[0] == t ? e.triangles[1] : e.triangles[0];
}

Vec3 Surface::displacement(const Vec3& from, const Vec3& to) const {
  Vec3 d = to - from;
  if (kind_ == SurfaceKind::flat_torus) {
    d.x() -= period_u_ * std::round(d.x() / period_u_);
    d.y() -= period_v_ * std::round(d.y() / period_v_);
  }
  return d;
}

Vec3 Surface::wrap(const Vec3& p) const {
  if (kind_ != SurfaceKind::flat_torus) return p;
  return {wrap_coord(p.x(), period_u_), wrap_coord(p.y(), period_v_), p.z()};
}

std::array<Vec3, 3> Surface::corners(int t) const {
  const auto& tri = triangles_[static_cast<std::size_t>(t)];
  const Vec3& p0 = vertices_[tri[0]];
  return {p0, p0 + displacement(p0, vertices_[tri[1]]), p0 + displacement(p0, vertices_[tri[2]])};
}

Vec3 Surface::position(const SurfacePoint& p) const {
  const auto c = corners(p.triangle);
  return wrap(p.bary[0] * c[0] + p.bary[1] * c[1] + p.bary[2] * c[2]);
}

Vec3 Surface::exact_position(const SurfacePoint& p) const {
  Vec3 x = position(p);
  if (kind_ == SurfaceKind::unit_sphere) x.normalize();
  return x;
}

SurfacePoint Surface::vertex_point(int v) const {
  const int t = vertex_tris_[static_cast<std::size_t>(v)].front();
  SurfacePoint p{t, {0, 0, 0}};
  for (int k = 0; k < 3; ++k)
    if (triangles_[t][k] == v) p.bary[k] = 1.0;
  return p;
}

SurfacePoint Surface::edge_point(const EdgePoint& e) const {
  const int id = edge_id(e.v0, e.v1);
  if (id < 0) throw DomainError("edge point on a non-edge");
  const int t = edges_[static_cast<std::size_t>(id)].triangles[0];
  SurfacePoint p{t, {0, 0, 0}};
  for (int k = 0; k < 3; ++k) {
    if (triangles_[t][k] == e.v0) p.bary[k] = 1.0 - e.t;
    if (triangles_[t][k] == e.v1) p.bary[k] = e.t;
  }
  return p;
}

Vec3 Surface::edge_point_position(const EdgePoint& e) const {
  const Vec3& a = vertices_[e.v0];
  return wrap(a + e.t * displacement(a, vertices_[e.v1]));
}

Vec3 Surface::triangle_normal(int t) const {
  if (kind_ == SurfaceKind::flat_torus) return Vec3::UnitZ();
  const auto c = corners(t);
  return (c[1] - c[0]).cross(c[2] - c[0]).normalized();
}

Vec3 Surface::vertex_normal(int v) const {
  if (kind_ == SurfaceKind::flat_torus) return Vec3::UnitZ();
  if (kind_ == SurfaceKind::unit_sphere) return vertices_[v].normalized();
  Vec3 n = Vec3::Zero();
  for (int t : vertex_tris_[v]) n += areas_[t] * triangle_normal(t);
  return n.normalized();
}

int Surface::euler_characteristic() const {
  return static_cast<int>(vertices_.size()) - static_cast<int>(edges_.size()) +
         static_cast<int>(triangles_.size());
}

double Surface::diameter() const {
  switch (kind_) {
    case SurfaceKind::unit_sphere: return std::numbers::pi;
    case SurfaceKind::flat_torus: return 0.5 * std::hypot(period_u_, period_v_);
    case SurfaceKind::triangle_mesh: break;
  }
  return diameter_;
}

double Surface::exact_distance(const Vec3& a, const Vec3& b) const {
  switch (kind_) {
    case SurfaceKind::unit_sphere: {
      const Vec3 x = a.normalized(), y = b.normalized();
      return std::atan2(x.cross(y).norm(), x.dot(y));
    }
    case SurfaceKind::flat_torus: return displacement(a, b).norm();
    case SurfaceKind::triangle_mesh: break;
  }
  throw DomainError("exact distance is only available on the sphere and the flat torus");
}

// ---------------------------------------------------------------------------
// Vertex grid

void Surface::build_vertex_grid() {
  const double target = std::max(2.0 * mean_edge_, 1e-12);
  const std::size_t nv = vertices_.size();
  const double cap = static_cast<double>(std::max<std::size_t>(8, 2 * nv));
  if (kind_ == SurfaceKind::flat_torus) {
    grid_origin_ = Vec3::Zero();
    grid_dims_ = {std::max(1, static_cast<int>(period_u_ / target)),
                  std::max(1, static_cast<int>(period_v_ / target)), 1};
    while (static_cast<double>(grid_dims_[0]) * grid_dims_[1] > cap) {
      grid_dims_[0] = std::max(1, grid_dims_[0] / 2);
      grid_dims_[1] = std::max(1, grid_dims_[1] / 2);
    }
    grid_cell_ = {period_u_ / grid_dims_[0], period_v_ / grid_dims_[1], 1.0};
  } else {
    Vec3 lo = vertices_[0], hi = vertices_[0];
    for (const auto& p : vertices_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    double cell = target;
    auto dims_for = [&](double c) {
      std::array<int, 3> d{};
      for (int k = 0; k < 3; ++k) d[k] = std::max(1, static_cast<int>(std::ceil((hi[k] - lo[k]) / c + 1e-9)));
      return d;
    };
    auto d = dims_for(cell);
    while (static_cast<double>(d[0]) * d[1] * d[2] > cap) {
      cell *= 1.5;
      d = dims_for(cell);
    }
    grid_origin_ = lo;
    grid_dims_ = d;
    grid_cell_ = {cell, cell, cell};
  }
  const std::size_t ncell = static_cast<std::size_t>(grid_dims_[0]) * grid_dims_[1] * grid_dims_[2];
  std::vector<int> count(ncell + 1, 0);
  std::vector<std::size_t> which(nv);
  for (std::size_t v = 0; v < nv; ++v) {
    const auto c = cell_of(vertices_[v]);
    which[v] = (static_cast<std::size_t>(c[2]) * grid_dims_[1] + c[1]) * grid_dims_[0] + c[0];
    ++count[which[v] + 1];
  }
  for (std::size_t i = 0; i < ncell; ++i) count[i + 1] += count[i];
  grid_start_ = count;
  grid_items_.assign(nv, -1);
  for (std::size_t v = 0; v < nv; ++v) grid_items_[static_cast<std::size_t>(count[which[v]]++)] = static_cast<int>(v);
}

std::array<int, 3> Surface::cell_of(const Vec3& p) const {
  std::array<int, 3> c{};
  const Vec3 q = wrap(p);
  for (int k = 0; k < 3; ++k) {
    c[k] = static_cast<int>(std::floor((q[k] - grid_origin_[k]) / grid_cell_[k]));
    c[k] = std::clamp(c[k], 0, grid_dims_[k] - 1);
  }
  return c;
}

void Surface::for_each_vertex_near(const Vec3& p, double radius,
                                   const std::function<void(int)>& fn) const {
  const auto c = cell_of(p);
  std::array<std::vector<int>, 3> ranges;
  for (int k = 0; k < 3; ++k) {
    const int reach = static_cast<int>(std::ceil(radius / grid_cell_[k])) + 1;
    const bool periodic = kind_ == SurfaceKind::flat_torus && k < 2;
    if (periodic) {
      if (2 * reach + 1 >= grid_dims_[k]) {
        for (int i = 0; i < grid_dims_[k]; ++i) ranges[k].push_back(i);
      } else {
        for (int i = c[k] - reach; i <= c[k] + reach; ++i)
          ranges[k].push_back(((i % grid_dims_[k]) + grid_dims_[k]) % grid_dims_[k]);
      }
    } else {
      for (int i = std::max(0, c[k] - reach); i <= std::min(grid_dims_[k] - 1, c[k] + reach); ++i)
        ranges[k].push_back(i);
    }
  }
  const double r2 = radius * radius;
  for (int z : ranges[2])
    for (int y : ranges[1])
      for (int x : ranges[0]) {
        const std::size_t cell = (static_cast<std::size_t>(z) * grid_dims_[1] + y) * grid_dims_[0] + x;
        for (int i = grid_start_[cell]; i < grid_start_[cell + 1]; ++i) {
          const int v = grid_items_[static_cast<std::size_t>(i)];
          if (displacement(p, vertices_[v]).squaredNorm() <= r2) fn(v);
        }
      }
}

SurfacePoint Surface::locate(const Vec3& p) const {
  double radius = 1.01 * max_edge_ + 1e-12;
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<int> tris;
    for_each_vertex_near(p, radius, [&](int v) {
      for (int t : vertex_tris_[v]) tris.push_back(t);
    });
    if (!tris.empty()) {
      std::sort(tris.begin(), tris.end());
      tris.erase(std::unique(tris.begin(), tris.end()), tris.end());
      SurfacePoint best;
      double best_d = std::numeric_limits<double>::infinity();
      for (int t : tris) {
        const auto c = corners(t);
        const Vec3 q = c[0] + displacement(c[0], p);
        const auto w = closest_on_triangle(q, c[0], c[1], c[2]);
        const double d = (w[0] * c[0] + w[1] * c[1] + w[2] * c[2] - q).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = {t, w};
        }
      }
      return best;
    }
    radius *= 2.0;
  }
  throw DomainError("point could not be located on the surface");
}

double Polyline::length() const {
  double l = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) l += (points[i] - points[i - 1]).norm();
  return l;
}

}  // namespace geonodal
