#include "geonodal/pixelize.hpp"

#include "geonodal/errors.hpp"
#include "geonodal/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

namespace geonodal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec3 on_surface(const Surface& s, const Vec3& p) {
  return s.kind() == SurfaceKind::unit_sphere ? Vec3(p.normalized()) : s.wrap(p);
}

// Distances from a growing set of centers to arbitrary surface points.
class CenterDistances {
public:
  CenterDistances(const Surface& s, double reach) : s_(s), reach_(reach) {}

  void add(const Vec3& c, const SurfacePoint& loc) {
    centers_.push_back(on_surface(s_, c));
    if (s_.has_closed_form()) return;
    auto field = geodesic_distance(s_, loc, reach_);
    std::unordered_map<int, double> sparse;
    for (std::size_t v = 0; v < field.values.size(); ++v)
      if (std::isfinite(field.values[v])) sparse.emplace(static_cast<int>(v), field.values[v]);
    fields_.push_back(std::move(sparse));
  }

  double min_distance(const Vec3& q) const {
    double best = kInf;
    if (s_.has_closed_form()) {
      const Vec3 p = on_surface(s_, q);
      for (const auto& c : centers_) best = std::min(best, s_.exact_distance(c, p));
      return best;
    }
    const SurfacePoint loc = s_.locate(q);
    const auto& tri = s_.triangles()[static_cast<std::size_t>(loc.triangle)];
    for (const auto& f : fields_) {
      double d = 0.0;
      bool ok = true;
      for (int k = 0; k < 3 && ok; ++k) {
        auto it = f.find(tri[k]);
        if (it == f.end()) ok = false;
        else d += loc.bary[k] * it->second;
      }
      if (ok) best = std::min(best, d);
    }
    return best;
  }

  bool empty() const { return centers_.empty(); }

private:
  const Surface& s_;
  double reach_;
  std::vector<Vec3> centers_;
  std::vector<std::unordered_map<int, double>> fields_;
};

double interpolate_sparse(const std::unordered_map<int, double>& f, const Surface& s, const SurfacePoint& p) {
  const auto& tri = s.triangles()[static_cast<std::size_t>(p.triangle)];
  double d = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (p.bary[k] == 0.0) continue;
    auto it = f.find(tri[k]);
    if (it == f.end()) return kInf;
    d += p.bary[k] * it->second;
  }
  return d;
}

}  // namespace

CenterCluster select_centers(const NodalSet& set, double spacing) {
  if (!(spacing > 0) || !std::isfinite(spacing)) throw DomainError("center spacing must be > 0");
  if (set.empty()) throw DomainError("cannot place centers on an empty nodal set");
  const Surface& s = *set.surface;
  CenterCluster cluster;
  cluster.surface = set.surface;
  cluster.spacing = spacing;
  const double need = spacing * (1.0 - 1e-9);
  CenterDistances dist(s, 2.0 * spacing + 2.0 * s.max_edge_length());

  auto accept = [&](const Vec3& q) {
    const Vec3 p = on_surface(s, q);
    const SurfacePoint loc = s.locate(p);
    cluster.centers.push_back(p);
    cluster.locations.push_back(loc);
    dist.add(p, loc);
  };

  const double step = spacing / 32.0;
  for (const auto& line : set.polylines) {
    bool have_prev = false;
    Vec3 prev = Vec3::Zero();
    for (std::size_t i = 0; i + 1 < line.points.size() || (i == 0 && line.points.size() == 1); ++i) {
      const Vec3 a = line.points[i];
      const Vec3 b = line.points.size() > 1 ? line.points[i + 1] : a;
      const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
      for (int k = (i == 0 ? 0 : 1); k <= n; ++k) {
        const Vec3 q = a + (static_cast<double>(k) / n) * (b - a);
        const bool ok = dist.empty() || dist.min_distance(q) >= need;
        if (ok) {
          if (!have_prev) {
            accept(q);
          } else {
            // first point between prev (too close) and q (far enough)
            Vec3 lo = prev, hi = q;
            for (int it = 0; it < 40; ++it) {
              const Vec3 mid = 0.5 * (lo + hi);
              if (dist.min_distance(mid) >= need) hi = mid;
              else lo = mid;
            }
            accept(hi);
          }
        }
        prev = q;
        have_prev = true;
      }
      if (line.points.size() == 1) break;
    }
  }
  return cluster;
}

double front_tension(std::span<const double> s, std::span<const double> h) {
  if (s.size() != h.size()) throw DomainError("front samples and arclengths differ in size");
  if (h.size() < 3) throw DomainError("front tension needs at least 3 samples");
  double hmax = 0.0;
  for (double x : h) hmax = std::max(hmax, std::abs(x));
  const double eps = 1e-12 * hmax;
  double t = 0.0;
  const std::size_t n = h.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == n ? n - 1 : i + 1;
    const double ds = s[hi] - s[lo];
    if (!(ds > 0)) continue;
    const double dh = (h[hi] - h[lo]) / ds;
    const double den = h[i] * h[i] + eps * eps;
    if (den > 0) t = std::max(t, dh * dh / den);
  }
  return t;
}

double pixel_curvature_ratio(const Surface& surface, std::span<const int> triangles,
                             std::span<const double> gaussian_curvature) {
  if (gaussian_curvature.size() != surface.vertex_count())
    throw DomainError("curvature field size does not match vertex count");
  std::vector<double> R(gaussian_curvature.size());
  double rmax = 0.0;
  for (std::size_t v = 0; v < R.size(); ++v) {
    R[v] = 2.0 * gaussian_curvature[v];
    rmax = std::max(rmax, std::abs(R[v]));
  }
  if (rmax == 0.0) return 0.0;
  const double eps = 1e-9 * rmax;
  double best = 0.0;
  for (int t : triangles) {
    const Vec3 g = triangle_gradient(surface, R, t);
    const auto& tri = surface.triangles()[static_cast<std::size_t>(t)];
    const double r = std::abs((R[tri[0]] + R[tri[1]] + R[tri[2]]) / 3.0);
    best = std::max(best, g.squaredNorm() / (r * r * r + eps * eps * eps));
  }
  return best;
}

PixelDecomposition build_pixels(SurfacePtr surface, const CenterCluster& cluster, const RadiusRule& rule) {
  const Surface& s = *surface;
  const std::size_t nc = cluster.centers.size();
  if (nc == 0) throw DomainError("pixel decomposition needs at least one center");
  PixelDecomposition dec;
  dec.surface = surface;
  dec.cluster = cluster;
  if (!rule.per_center.empty()) {
    if (rule.per_center.size() != nc) throw DomainError("radius list does not match the center count");
    dec.radii = rule.per_center;
  } else {
    dec.radii.assign(nc, rule.uniform);
  }
  for (double r : dec.radii)
    if (!(r > 0) || !std::isfinite(r)) throw DomainError("ball radii must be > 0");

  const auto& tris = s.triangles();
  std::vector<std::vector<int>> signature(tris.size());
  std::vector<std::vector<Polyline>> circles(nc);
  std::vector<std::unordered_map<int, double>> sparse(s.has_closed_form() ? 0 : nc);
  for (std::size_t i = 0; i < nc; ++i) {
    const double r = dec.radii[i];
    const double cutoff = r + 2.0 * s.max_edge_length();
    auto field = geodesic_distance(s, cluster.locations[i], cutoff);
    auto& d = field.values;
    std::vector<int> touched;
    for (std::size_t v = 0; v < d.size(); ++v) {
      if (!std::isfinite(d[v])) continue;
      for (int t : s.vertex_triangles()[v]) touched.push_back(t);
      if (!sparse.empty()) sparse[i].emplace(static_cast<int>(v), d[v]);
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (int t : touched) {
      const auto& tri = tris[static_cast<std::size_t>(t)];
      const double sum = d[tri[0]] + d[tri[1]] + d[tri[2]];
      if (std::isfinite(sum) && sum / 3.0 <= r) signature[static_cast<std::size_t>(t)].push_back(static_cast<int>(i));
    }
    for (double& x : d)
      if (!std::isfinite(x)) x = cutoff;
    circles[i] = chain_contour(s, contour_segments(s, d, r, touched));
  }

  std::map<std::vector<int>, int> index;
  dec.pixel_of_triangle.assign(tris.size(), -1);
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (signature[t].empty()) {
      dec.uncovered.push_back(static_cast<int>(t));
      dec.uncovered_area += s.triangle_area(static_cast<int>(t));
      continue;
    }
    index.emplace(signature[t], 0);
  }
  for (auto& [sig, id] : index) {
    id = static_cast<int>(dec.pixels.size());
    Pixel p;
    p.signature = sig;
    dec.pixels.push_back(std::move(p));
    dec.max_signature = std::max(dec.max_signature, static_cast<int>(sig.size()));
    if (sig.size() > 3) ++dec.oversized_signatures;
  }
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (signature[t].empty()) continue;
    const int id = index.at(signature[t]);
    dec.pixel_of_triangle[t] = id;
    dec.pixels[static_cast<std::size_t>(id)].triangles.push_back(static_cast<int>(t));
    dec.pixels[static_cast<std::size_t>(id)].area += s.triangle_area(static_cast<int>(t));
  }
  for (const auto& loc : cluster.locations) {
    const int id = dec.pixel_of_triangle[static_cast<std::size_t>(loc.triangle)];
    if (id >= 0) dec.pixels[static_cast<std::size_t>(id)].contains_center = true;
  }

  // curvature data
  const std::vector<double> K = gaussian_curvature_field(s);
  std::map<double, double> h_cache;
  auto circle_h = [&](std::size_t ball, const Vec3& at) {
    const double r = dec.radii[ball];
    const double r0 = 1e-4 * r;
    if (s.has_closed_form()) {
      auto it = h_cache.find(r);
      if (it != h_cache.end()) return it->second;
      const double k = K.front();
      const double h = geodesic_circle_curvature([k](double) { return k; }, r, r0);
      h_cache.emplace(r, h);
      return h;
    }
    // curvature profile along the chord from the center, sampled at 16 stations
    const Vec3 c = cluster.centers[ball];
    std::array<double, 17> prof{};
    for (int k = 0; k <= 16; ++k) {
      const SurfacePoint p = s.locate(c + (k / 16.0) * (at - c));
      const auto& tri = s.triangles()[static_cast<std::size_t>(p.triangle)];
      prof[static_cast<std::size_t>(k)] = p.bary[0] * K[tri[0]] + p.bary[1] * K[tri[1]] + p.bary[2] * K[tri[2]];
    }
    auto kfun = [&prof, r](double x) {
      const double u = std::clamp(x / r, 0.0, 1.0) * 16.0;
      const int i = std::min(15, static_cast<int>(u));
      const double w = u - i;
      return (1 - w) * prof[static_cast<std::size_t>(i)] + w * prof[static_cast<std::size_t>(i) + 1];
    };
    return geodesic_circle_curvature(kfun, r, r0);
  };
  auto distance_to = [&](std::size_t ball, const Vec3& p, const SurfacePoint& loc) {
    if (s.has_closed_form()) return s.exact_distance(cluster.centers[ball], on_surface(s, p));
    return interpolate_sparse(sparse[ball], s, loc);
  };

  for (std::size_t pid = 0; pid < dec.pixels.size(); ++pid) {
    Pixel& px = dec.pixels[pid];
    px.curvature_ratio = pixel_curvature_ratio(s, px.triangles, K);
    for (int j : px.signature) {
      for (const auto& line : circles[static_cast<std::size_t>(j)]) {
        const std::size_t n = line.points.size();
        std::vector<char> keep(n, 1);
        for (std::size_t k = 0; k < n; ++k)
          for (int i : px.signature)
            if (i != j && distance_to(static_cast<std::size_t>(i), line.points[k], line.locations[k]) >
                              dec.radii[static_cast<std::size_t>(i)])
              keep[k] = 0;
        // runs of kept samples; closed loops are rotated to start after a dropped sample
        std::size_t start = 0;
        const bool closed = line.closed && n > 1;
        const std::size_t m = closed ? n - 1 : n;  // last point repeats the first on loops
        if (closed) {
          for (std::size_t k = 0; k < m; ++k)
            if (!keep[k]) {
              start = k;
              break;
            }
        }
        const bool full = closed && std::all_of(keep.begin(), keep.begin() + static_cast<long>(m), [](char c) { return c; });
        std::vector<std::vector<std::size_t>> runs;
        std::vector<std::size_t> cur;
        for (std::size_t q = 0; q < m; ++q) {
          const std::size_t k = (start + q) % m;
          if (keep[k]) {
            cur.push_back(k);
          } else if (!cur.empty()) {
            runs.push_back(std::move(cur));
            cur.clear();
          }
        }
        if (!cur.empty()) runs.push_back(std::move(cur));
        for (auto& run : runs) {
          Front f;
          f.pixel = static_cast<int>(pid);
          f.ball = j;
          f.radius = dec.radii[static_cast<std::size_t>(j)];
          // continuous frame: rebuild by accumulating displacements
          Vec3 cursor = line.points[run.front()];
          double acc = 0.0;
          for (std::size_t q = 0; q < run.size(); ++q) {
            const std::size_t k = run[q];
            if (q > 0) {
              const Vec3 next = cursor + s.displacement(s.wrap(cursor), s.wrap(line.points[k]));
              acc += (next - cursor).norm();
              cursor = next;
            }
            f.arc.points.push_back(cursor);
            f.arc.locations.push_back(line.locations[k]);
            f.s.push_back(acc);
            f.h.push_back(circle_h(static_cast<std::size_t>(j), line.points[k]));
          }
          if (full) {
            const Vec3 next = cursor + s.displacement(s.wrap(cursor), s.wrap(f.arc.points.front()));
            acc += (next - cursor).norm();
            f.arc.points.push_back(next);
            f.arc.locations.push_back(f.arc.locations.front());
            f.s.push_back(acc);
            f.h.push_back(f.h.front());
            f.arc.closed = true;
          }
          if (f.h.size() >= 3) f.tension = front_tension(f.s, f.h);
          else f.undersampled = true;
          px.fronts.push_back(static_cast<int>(dec.fronts.size()));
          dec.fronts.push_back(std::move(f));
        }
      }
    }
  }
  return dec;
}

ConditionResult check_condition(const PixelDecomposition& decomposition, int pixel, std::span<const double> eta,
                                double mu) {
  if (pixel < 0 || static_cast<std::size_t>(pixel) >= decomposition.pixels.size())
    throw DomainError("pixel index out of range");
  const Pixel& px = decomposition.pixels[static_cast<std::size_t>(pixel)];
  if (eta.size() != px.fronts.size() && eta.size() != 1)
    throw DomainError("eta list must have one entry per front (or a single shared value)");
  ConditionResult res;
  for (std::size_t k = 0; k < px.fronts.size(); ++k) {
    const double bound = eta.size() == 1 ? eta[0] : eta[k];
    if (!(decomposition.fronts[static_cast<std::size_t>(px.fronts[k])].tension <= bound))
      res.failed_fronts.push_back(static_cast<int>(k));
  }
  res.ratio_failed = !(px.curvature_ratio <= mu);
  res.holds = res.failed_fronts.empty() && !res.ratio_failed;
  return res;
}

}  // namespace geonodal
