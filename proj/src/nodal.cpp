#include "geonodal/nodal.hpp"

#include "geonodal/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <deque>
#include <limits>
#include <map>
#include <numbers>
#include <variant>
#include <unordered_map>

namespace geonodal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t edge_key(const EdgePoint& e) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.v0)) << 32) | static_cast<std::uint32_t>(e.v1);
}

// Endpoints of a segment in the unwrapped frame of its triangle.
std::pair<Vec3, Vec3> local_endpoints(const Surface& s, const ContourSegment& seg) {
  const auto c = s.corners(seg.triangle);
  const auto& tri = s.triangles()[seg.triangle];
  auto at = [&](const EdgePoint& e) {
    Vec3 pa = c[0], pb = c[0];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] == e.v0) pa = c[k];
      if (tri[k] == e.v1) pb = c[k];
    }
    return Vec3((1 - e.t) * pa + e.t * pb);
  };
  return {at(seg.a), at(seg.b)};
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double interpolate(std::span<const double> f, const EdgePoint& e) { return (1 - e.t) * f[e.v0] + e.t * f[e.v1]; }

Vec3 surface_normal(const Surface& s, const Vec3& p) {
  switch (s.kind()) {
    case SurfaceKind::unit_sphere: return p.normalized();
    case SurfaceKind::flat_torus: return Vec3::UnitZ();
    default: return s.triangle_normal(s.locate(p).triangle);
  }
}

}  // namespace

NodalSet extract_nodal_set(const EigenPair& pair) {
  const Surface& s = *pair.surface;
  const double m = max_abs(pair.values);
  if (!(m > 0)) throw DomainError("nodal set of an identically zero function");
  NodalSet set;
  set.surface = pair.surface;
  set.field = pair.values;
  set.perturbation = kZeroThreshold * m;
  for (double& x : set.field)
    if (std::abs(x) <= set.perturbation) {
      x = set.perturbation;
      ++set.perturbed_vertices;
    }
  set.segments = contour_segments(s, set.field, 0.0);
  set.segment_of_triangle.assign(s.triangle_count(), -1);
  std::unordered_map<std::uint64_t, std::vector<int>> incident;
  for (std::size_t i = 0; i < set.segments.size(); ++i) {
    const auto& seg = set.segments[i];
    const auto [pa, pb] = local_endpoints(s, seg);
    set.segment_lengths.push_back((pb - pa).norm());
    set.length += set.segment_lengths.back();
    set.segment_of_triangle[static_cast<std::size_t>(seg.triangle)] = static_cast<int>(i);
    incident[edge_key(seg.a)].push_back(static_cast<int>(i));
    incident[edge_key(seg.b)].push_back(static_cast<int>(i));
  }
  for (const auto& [k, ids] : incident)
    if (ids.size() >= 3) set.graph_degree_ge3.push_back(ids.front());
  std::sort(set.graph_degree_ge3.begin(), set.graph_degree_ge3.end());
  set.polylines = chain_contour(s, set.segments);
  return set;
}

double nodal_length(const NodalSet& set, const std::optional<Region>& restrict_to) {
  if (!restrict_to) return set.length;
  std::vector<int> tris = restrict_to->triangles;
  std::sort(tris.begin(), tris.end());
  tris.erase(std::unique(tris.begin(), tris.end()), tris.end());
  double total = 0.0;
  for (int t : tris) {
    if (t < 0 || static_cast<std::size_t>(t) >= set.segment_of_triangle.size()) continue;
    const int id = set.segment_of_triangle[static_cast<std::size_t>(t)];
    if (id < 0) continue;
    const auto& seg = set.segments[static_cast<std::size_t>(id)];
    double lo = 0.0, hi = 1.0;
    for (const auto& f : restrict_to->clip_fields) {
      const double fa = interpolate(f, seg.a), fb = interpolate(f, seg.b);
      if (fa <= 0 && fb <= 0) continue;
      if (fa > 0 && fb > 0) {
        hi = lo;
        break;
      }
      const double cut = fa / (fa - fb);
      if (fa > 0) lo = std::max(lo, cut);
      else hi = std::min(hi, cut);
    }
    if (hi > lo) total += (hi - lo) * set.segment_lengths[static_cast<std::size_t>(id)];
  }
  return total;
}

NodalDomainSet nodal_domains(const EigenPair& pair, double epsilon) {
  const Surface& s = *pair.surface;
  const auto& u = pair.values;
  const double m = max_abs(u);
  if (!(epsilon >= 0)) throw DomainError("epsilon must be >= 0");
  if (epsilon >= m) throw DomainError("epsilon at or above max|u| leaves no nodal domain");
  const double floor = epsilon > 0 ? epsilon : kZeroThreshold * m;
  auto sign_of = [&](int v) { return u[v] > floor ? 1 : (u[v] < -floor ? -1 : 0); };

  NodalDomainSet out;
  out.epsilon = epsilon;
  out.labels.assign(s.vertex_count(), -1);
  const auto& nbr = s.vertex_neighbors();
  std::deque<int> queue;
  for (std::size_t v0 = 0; v0 < s.vertex_count(); ++v0) {
    const int sg = sign_of(static_cast<int>(v0));
    if (sg == 0 || out.labels[v0] >= 0) continue;
    const int id = out.count++;
    out.signs.push_back(sg);
    out.vertices.emplace_back();
    out.labels[v0] = id;
    queue.push_back(static_cast<int>(v0));
    while (!queue.empty()) {
      const int v = queue.front();
      queue.pop_front();
      out.vertices[static_cast<std::size_t>(id)].push_back(v);
      for (int w : nbr[v])
        if (out.labels[w] < 0 && sign_of(w) == sg) {
          out.labels[w] = id;
          queue.push_back(w);
        }
    }
    std::sort(out.vertices.back().begin(), out.vertices.back().end());
  }
  out.volumes.assign(static_cast<std::size_t>(out.count), 0.0);
  out.triangles.resize(static_cast<std::size_t>(out.count));
  const auto& tris = s.triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& tri = tris[t];
    const double area = s.triangle_area(static_cast<int>(t));
    for (int sg : {1, -1}) {
      int label = -1;
      for (int k = 0; k < 3; ++k)
        if (out.labels[tri[k]] >= 0 && out.signs[static_cast<std::size_t>(out.labels[tri[k]])] == sg)
          label = out.labels[tri[k]];
      if (label < 0) continue;
      // area of {sg * u > epsilon} inside the triangle
      std::array<double, 3> g{};
      for (int k = 0; k < 3; ++k) g[k] = sg * u[tri[k]] - epsilon;
      int inside = 0;
      for (double x : g) inside += x > 0 ? 1 : 0;
      double part = 0.0;
      if (inside == 3) {
        part = area;
      } else if (inside > 0) {
        const bool odd_inside = inside == 1;
        int k = 0;
        for (int i = 0; i < 3; ++i)
          if ((g[i] > 0) == odd_inside) k = i;
        const double t1 = g[k] / (g[k] - g[(k + 1) % 3]);
        const double t2 = g[k] / (g[k] - g[(k + 2) % 3]);
        const double corner = area * t1 * t2;
        part = odd_inside ? corner : area - corner;
      }
      out.volumes[static_cast<std::size_t>(label)] += part;
      out.triangles[static_cast<std::size_t>(label)].push_back(static_cast<int>(t));
    }
  }
  return out;
}

BallZeroReport zero_in_every_ball(const EigenPair& pair, double radius, int sample_centers) {
  if (!(radius > 0)) throw DomainError("ball radius must be > 0");
  const Surface& s = *pair.surface;
  const NodalSet set = extract_nodal_set(pair);
  BallZeroReport rep;

  std::vector<int> centers;
  const int nv = static_cast<int>(s.vertex_count());
  const int count = std::max(1, sample_centers);
  if (count >= nv) {
    for (int v = 0; v < nv; ++v) centers.push_back(v);
  } else {
    for (int k = 0; k < count; ++k)
      centers.push_back(static_cast<int>(static_cast<long long>(k) * nv / count));
  }
  if (!set.empty()) {
    const auto dom = nodal_domains(pair, 0.0);
    for (const auto& vs : dom.vertices) {
      int best = vs.front();
      for (int v : vs)
        if (std::abs(pair.values[v]) > std::abs(pair.values[best])) best = v;
      centers.push_back(best);
    }
  }
  std::sort(centers.begin(), centers.end());
  centers.erase(std::unique(centers.begin(), centers.end()), centers.end());

  // nodal sample points: segment endpoints and midpoints
  std::vector<Vec3> points;
  for (const auto& seg : set.segments) {
    const Vec3 a = s.edge_point_position(seg.a);
    const Vec3 b = a + s.displacement(a, s.edge_point_position(seg.b));
    for (const Vec3& p : {a, Vec3(0.5 * (a + b))}) points.push_back(s.wrap(p));
  }

  rep.worst_margin = -kInf;
  for (int c : centers) {
    double dmin = kInf;
    if (set.empty()) {
      dmin = kInf;
    } else if (s.has_closed_form()) {
      const Vec3& pc = s.vertices()[c];
      for (const Vec3& p : points) dmin = std::min(dmin, s.exact_distance(pc, p));
    } else {
      const auto field = geodesic_distance(s, s.vertex_point(c));
      const auto& d = field.values;
      for (const auto& seg : set.segments) {
        const double da = (1 - seg.a.t) * d[seg.a.v0] + seg.a.t * d[seg.a.v1];
        const double db = (1 - seg.b.t) * d[seg.b.v0] + seg.b.t * d[seg.b.v1];
        dmin = std::min({dmin, da, db, 0.5 * (da + db)});
      }
    }
    const double margin = dmin - radius;
    ++rep.centers_tested;
    if (margin > 0) ++rep.violations;
    if (margin > rep.worst_margin) {
      rep.worst_margin = margin;
      rep.worst_center = c;
    }
  }
  rep.holds = rep.violations == 0;
  return rep;
}

TubularNeighborhood tubular_neighborhood(const EigenPair& pair, double eta) {
  if (!(eta > 0)) throw DomainError("tube level must be > 0");
  const Surface& s = *pair.surface;
  const auto& u = pair.values;
  TubularNeighborhood tube;
  tube.eta = eta;
  const auto& tris = s.triangles();
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto& tri = tris[t];
    const double a = u[tri[0]], b = u[tri[1]], c = u[tri[2]];
    const bool mixed = std::min({a, b, c}) <= 0 && std::max({a, b, c}) >= 0;
    const double mn = mixed ? 0.0 : std::min({std::abs(a), std::abs(b), std::abs(c)});
    if (mn <= eta) {
      tube.region.triangles.push_back(static_cast<int>(t));
      tube.triangle_area += s.triangle_area(static_cast<int>(t));
    }
  }
  std::vector<double> lo(u.size()), hi(u.size()), neg(u.size());
  for (std::size_t v = 0; v < u.size(); ++v) {
    lo[v] = u[v] - eta;
    hi[v] = -u[v] - eta;
    neg[v] = -u[v];
  }
  tube.area = std::max(0.0, sublevel_area(s, u, eta, tube.region.triangles) +
                                sublevel_area(s, neg, eta, tube.region.triangles) - tube.triangle_area);
  tube.region.clip_fields = {std::move(lo), std::move(hi)};
  return tube;
}

SingularPointSet singular_points(const NodalSet& set, const EigenPair& pair, double eta) {
  if (!(eta > 0)) throw DomainError("gradient threshold must be > 0");
  const Surface& s = *pair.surface;
  SingularPointSet out;
  out.threshold = eta;

  struct Candidate {
    EdgePoint e;
    Vec3 position;
    double gradient;
  };
  std::map<std::pair<int, int>, Candidate> found;
  auto consider = [&](const EdgePoint& e, bool forced) {
    const auto key = std::make_pair(e.v0, e.v1);
    if (found.count(key)) return;
    const int id = s.edge_id(e.v0, e.v1);
    const auto& edge = s.edges()[static_cast<std::size_t>(id)];
    const Vec3 g = 0.5 * (pair.gradients[static_cast<std::size_t>(edge.triangles[0])] +
                          pair.gradients[static_cast<std::size_t>(edge.triangles[1])]);
    if (forced || g.norm() < eta) found[key] = Candidate{e, s.edge_point_position(e), g.norm()};
  };
  for (int id : set.graph_degree_ge3) {
    consider(set.segments[static_cast<std::size_t>(id)].a, true);
  }
  for (const auto& seg : set.segments) {
    consider(seg.a, false);
    consider(seg.b, false);
  }
  std::vector<Candidate> cands;
  for (auto& [k, c] : found) cands.push_back(c);

  const double h = s.mean_edge_length();
  const double cluster_radius = 3.0 * h;
  std::vector<char> used(cands.size(), 0);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (used[i]) continue;
    std::vector<std::size_t> members{i};
    used[i] = 1;
    for (std::size_t q = 0; q < members.size(); ++q)
      for (std::size_t j = 0; j < cands.size(); ++j)
        if (!used[j] && s.displacement(cands[members[q]].position, cands[j].position).norm() <= cluster_radius) {
          used[j] = 1;
          members.push_back(j);
        }
    std::size_t seed = members.front();
    for (std::size_t j : members)
      if (cands[j].gradient < cands[seed].gradient) seed = j;
    ++out.candidates;

    // harmonic fit of degree <= 4 in a tangent chart, recentered at the fitted critical point
    Vec3 center = cands[seed].position;
    Eigen::VectorXd coef;
    double rho = cluster_radius;
    for (int pass = 0; pass < 3; ++pass) {
      const Vec3 n = surface_normal(s, center);
      const Vec3 e1 = n.cross(std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).normalized();
      const Vec3 e2 = n.cross(e1);
      std::vector<std::pair<double, double>> xy;
      std::vector<double> val;
      for (double r = rho; xy.size() < 15 && r < 10 * rho; r *= 1.5) {
        xy.clear();
        val.clear();
        s.for_each_vertex_near(center, r, [&](int v) {
          const Vec3 d = s.displacement(center, s.vertices()[v]);
          xy.emplace_back(d.dot(e1) / r, d.dot(e2) / r);
          val.push_back(pair.values[v]);
        });
        rho = r;
      }
      if (xy.size() < 9) break;
      Eigen::MatrixXd A(static_cast<Eigen::Index>(xy.size()), 9);
      Eigen::VectorXd b(static_cast<Eigen::Index>(xy.size()));
      for (std::size_t r = 0; r < xy.size(); ++r) {
        const std::complex<double> z(xy[r].first, xy[r].second);
        std::complex<double> zk = 1.0;
        A(static_cast<Eigen::Index>(r), 0) = 1.0;
        for (int k = 1; k <= 4; ++k) {
          zk *= z;
          A(static_cast<Eigen::Index>(r), 2 * k - 1) = zk.real();
          A(static_cast<Eigen::Index>(r), 2 * k) = zk.imag();
        }
        b[static_cast<Eigen::Index>(r)] = val[r];
      }
      coef = A.colPivHouseholderQr().solve(b);
      if (pass == 2) break;
      // critical point of the fit: f'(z) = sum k c_k z^(k-1) with c_k = a_k - i b_k
      auto deriv = [&](std::complex<double> z, int order) {
        std::complex<double> acc = 0.0;
        for (int k = order; k <= 4; ++k) {
          const std::complex<double> ck(coef[2 * k - 1], -coef[2 * k]);
          double fac = 1.0;
          for (int j = 0; j < order; ++j) fac *= (k - j);
          acc += fac * ck * std::pow(z, k - order);
        }
        return acc;
      };
      std::complex<double> w = 0.0;
      for (int it = 0; it < 20; ++it) {
        const auto f1 = deriv(w, 1), f2 = deriv(w, 2);
        if (std::abs(f2) < 1e-300) break;
        const auto step = f1 / f2;
        w -= step;
        if (std::abs(step) < 1e-12) break;
      }
      if (!(std::abs(w) < 0.5)) break;
      Vec3 moved = center + rho * (w.real() * e1 + w.imag() * e2);
      if (s.kind() == SurfaceKind::unit_sphere) moved.normalize();
      center = s.wrap(moved);
    }
    if (coef.size() != 9) continue;
    SingularPoint sp;
    sp.position = center;
    sp.location = s.locate(center);
    sp.gradient = cands[seed].gradient;
    double peak = 0.0;
    for (int k = 0; k <= 4; ++k) {
      sp.degree_mass[static_cast<std::size_t>(k)] =
          k == 0 ? coef[0] * coef[0] : coef[2 * k - 1] * coef[2 * k - 1] + coef[2 * k] * coef[2 * k];
      if (k > 0) peak = std::max(peak, sp.degree_mass[static_cast<std::size_t>(k)]);
    }
    for (int k = 1; k <= 4; ++k)
      if (sp.degree_mass[static_cast<std::size_t>(k)] >= 0.5 * peak) {
        sp.multiplicity = k;
        break;
      }
    if (sp.multiplicity >= 2) out.points.push_back(sp);
  }
  return out;
}

namespace {

/// Associated Legendre P_l^m(x), m >= 0, without the Condon-Shortley phase.
double assoc_legendre(int l, int m, double x) {
  double pmm = 1.0;
  const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
  for (int k = 1; k <= m; ++k) pmm *= (2.0 * k - 1.0) * s;
  if (l == m) return pmm;
  double pm1 = x * (2.0 * m + 1.0) * pmm;
  for (int k = m + 2; k <= l; ++k) {
    const double next = ((2.0 * k - 1.0) * x * pm1 - (k + m - 1.0) * pmm) / (k - m);
    pmm = pm1;
    pm1 = next;
  }
  return pm1;
}

}  // namespace

std::optional<double> reference_nodal_length(const EigenPair& pair) {
  if (!pair.family) return std::nullopt;
  const Surface& s = *pair.surface;
  return std::visit(
      [&](const auto& f) -> std::optional<double> {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, SphereMode>) {
          const int m = std::abs(f.m);
          if (f.l == 0) return std::nullopt;
          double len = 2.0 * m * std::numbers::pi;
          const int steps = 64 * (f.l + 1);
          auto g = [&](double t) { return assoc_legendre(f.l, m, std::cos(t)); };
          for (int i = 0; i < steps; ++i) {
            double a = std::numbers::pi * i / steps, b = std::numbers::pi * (i + 1) / steps;
            double ga = g(a), gb = g(b);
            if (i == 0) a = 1e-12, ga = g(a);
            if (ga == 0.0 || ga * gb > 0) continue;
            for (int it = 0; it < 100; ++it) {
              const double c = 0.5 * (a + b), gc = g(c);
              if (ga * gc <= 0) {
                b = c;
              } else {
                a = c;
                ga = gc;
              }
            }
            len += 2.0 * std::numbers::pi * std::sin(0.5 * (a + b));
          }
          return len;
        } else if constexpr (std::is_same_v<T, TorusMode>) {
          if (f.m == 0 && f.n == 0) return std::nullopt;
          const double pu = s.period_u(), pv = s.period_v();
          return 2.0 * pu * pv * std::hypot(f.m / pu, f.n / pv);
        } else {
          if ((f.m == 0 && f.branch_u == TorusBranch::sine) || (f.n == 0 && f.branch_v == TorusBranch::sine))
            return std::nullopt;
          return 2.0 * std::abs(f.m) * s.period_v() + 2.0 * std::abs(f.n) * s.period_u();
        }
      },
      *pair.family);
}

}  // namespace geonodal
