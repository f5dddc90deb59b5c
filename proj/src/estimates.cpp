#include "geonodal/estimates.hpp"

#include "geonodal/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <unordered_map>

namespace geonodal {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<int> unique_vertices(const Surface& s, std::span<const int> triangles) {
  std::vector<int> vs;
  for (int t : triangles)
    for (int v : s.triangles()[static_cast<std::size_t>(t)]) vs.push_back(v);
  std::sort(vs.begin(), vs.end());
  vs.erase(std::unique(vs.begin(), vs.end()), vs.end());
  return vs;
}

Vec3 centroid(const Surface& s, int t) {
  const auto c = s.corners(t);
  return (c[0] + c[1] + c[2]) / 3.0;
}

}  // namespace

std::vector<Vec3> vertex_gradients(const EigenPair& pair) {
  const Surface& s = *pair.surface;
  std::vector<Vec3> g(s.vertex_count(), Vec3::Zero());
  for (std::size_t v = 0; v < g.size(); ++v) {
    double w = 0.0;
    for (int t : s.vertex_triangles()[v]) {
      const double a = s.triangle_area(t);
      g[v] += a * pair.gradients[static_cast<std::size_t>(t)];
      w += a;
    }
    g[v] /= w;
  }
  return g;
}

std::vector<double> vertex_hessians(const EigenPair& pair) {
  const Surface& s = *pair.surface;
  std::vector<double> hv(s.vertex_count(), 0.0);
  for (std::size_t v = 0; v < hv.size(); ++v) {
    const Vec3 n = s.vertex_normal(static_cast<int>(v));
    const Vec3 e1 = n.cross(std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).normalized();
    const Vec3 e2 = n.cross(e1);
    const auto& ring = s.vertex_triangles()[v];
    if (ring.size() < 3) continue;
    // grad u(x) ~ g0 + H x over the one-ring triangle centroids
    Eigen::MatrixXd A(static_cast<Eigen::Index>(ring.size()), 3);
    Eigen::MatrixXd B(static_cast<Eigen::Index>(ring.size()), 2);
    for (std::size_t k = 0; k < ring.size(); ++k) {
      const int t = ring[k];
      const Vec3 d = s.displacement(s.vertices()[v], s.wrap(centroid(s, t)));
      const Vec3& g = pair.gradients[static_cast<std::size_t>(t)];
      const auto r = static_cast<Eigen::Index>(k);
      A(r, 0) = 1.0;
      A(r, 1) = d.dot(e1);
      A(r, 2) = d.dot(e2);
      B(r, 0) = g.dot(e1);
      B(r, 1) = g.dot(e2);
    }
    const Eigen::MatrixXd X = A.colPivHouseholderQr().solve(B);
    Eigen::Matrix2d H;
    H << X(1, 0), X(2, 0), X(1, 1), X(2, 1);
    const Eigen::Matrix2d Hs = 0.5 * (H + H.transpose());
    const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(Hs).eigenvalues();
    hv[v] = std::max(std::abs(ev[0]), std::abs(ev[1]));
  }
  return hv;
}

double region_boundary_length(const Surface& s, std::span<const int> triangles) {
  std::unordered_map<int, int> count;
  for (int t : triangles) {
    const auto& tri = s.triangles()[static_cast<std::size_t>(t)];
    for (int k = 0; k < 3; ++k) ++count[s.edge_id(tri[k], tri[(k + 1) % 3])];
  }
  std::vector<int> boundary;
  for (const auto& [e, c] : count)
    if (c == 1) boundary.push_back(e);
  std::sort(boundary.begin(), boundary.end());
  double len = 0.0;
  for (int e : boundary) {
    const auto& edge = s.edges()[static_cast<std::size_t>(e)];
    len += s.edge_length(edge.a, edge.b);
  }
  return len;
}

double region_area(const Surface& s, std::span<const int> triangles) {
  double a = 0.0;
  for (int t : triangles) a += s.triangle_area(t);
  return a;
}

// ---------------------------------------------------------------------------
// Dong

DongEvaluator::DongEvaluator(const EigenPair& pair, double eps_rel, int dimension)
    : pair_(&pair), eps_rel_(eps_rel), dimension_(dimension) {
  if (!(eps_rel > 0) || eps_rel > 1e-2) throw DomainError("eps_rel must lie in (0, 1e-2]");
  if (dimension < 1) throw DomainError("dimension must be >= 1");
  const Surface& s = *pair.surface;
  const auto g = vertex_gradients(pair);
  q_.resize(s.vertex_count());
  double qmax = 0.0;
  for (std::size_t v = 0; v < q_.size(); ++v) {
    q_[v] = g[v].squaredNorm() + pair.lambda / dimension * pair.values[v] * pair.values[v];
    qmax = std::max(qmax, q_[v]);
  }
  reg_ = (eps_rel * qmax) * (eps_rel * qmax);
  std::vector<double> lq(q_.size());
  for (std::size_t v = 0; v < q_.size(); ++v) lq[v] = std::log(q_[v] + reg_);
  integrand_.resize(s.triangle_count());
  for (std::size_t t = 0; t < integrand_.size(); ++t)
    integrand_[t] = s.triangle_area(static_cast<int>(t)) * triangle_gradient(s, lq, static_cast<int>(t)).norm();
}

DongBound DongEvaluator::evaluate(const Region& region, const NodalSet& set, int region_id) const {
  const Surface& s = *pair_->surface;
  if (region.triangles.empty()) throw DomainError("Dong bound needs a nonempty region");
  DongBound b;
  b.region_id = region_id;
  b.eps_rel = eps_rel_;
  b.regularization = reg_;
  double integral = 0.0;
  for (int t : region.triangles) integral += integrand_[static_cast<std::size_t>(t)];
  b.integral_term = 0.5 * integral;
  b.area = region_area(s, region.triangles);
  b.volume_term = std::sqrt(dimension_ * pair_->lambda) * b.area;
  b.boundary_term = region_boundary_length(s, region.triangles);
  b.total = b.integral_term + b.volume_term + b.boundary_term;
  b.extracted_length = nodal_length(set, Region{region.triangles, {}});
  return b;
}

DongBound dong_upper_bound(const EigenPair& pair, const Region& region, double eps_rel, int dimension) {
  const DongEvaluator ev(pair, eps_rel, dimension);
  return ev.evaluate(region, extract_nodal_set(pair));
}

// ---------------------------------------------------------------------------
// Density and scaling

DensityStats lower_bound_density(const EigenPair& pair, const PixelDecomposition& decomposition,
                                 const NodalSet& set, DensityPixels rule) {
  DensityStats st;
  const double root = std::sqrt(pair.lambda);
  for (std::size_t p = 0; p < decomposition.pixels.size(); ++p) {
    const auto& px = decomposition.pixels[p];
    const double len = nodal_length(set, Region{px.triangles, {}});
    const bool include = rule == DensityPixels::containing_center ? px.contains_center : len > 0;
    if (!include) {
      ++st.excluded;
      continue;
    }
    st.pixels.push_back(static_cast<int>(p));
    st.values.push_back(root * len);
  }
  if (!st.values.empty()) {
    std::vector<double> sorted = st.values;
    std::sort(sorted.begin(), sorted.end());
    st.min = sorted.front();
    st.max = sorted.back();
    const std::size_t n = sorted.size();
    st.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  }
  return st;
}

ScalingFit scaling_fit(std::vector<std::pair<double, double>> samples) {
  if (samples.size() < 2) throw DomainError("scaling fit needs at least 2 samples");
  for (const auto& [l, L] : samples)
    if (!(l > 0) || !(L > 0)) throw DomainError("scaling samples must be positive");
  ScalingFit fit;
  fit.samples = samples;
  const double n = static_cast<double>(samples.size());
  double sx = 0, sy = 0;
  for (const auto& [l, L] : samples) {
    sx += std::log(l);
    sy += std::log(L);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [l, L] : samples) {
    sxx += (std::log(l) - mx) * (std::log(l) - mx);
    sxy += (std::log(l) - mx) * (std::log(L) - my);
  }
  if (!(sxx > 0)) throw DomainError("scaling samples need distinct eigenvalues");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0;
  for (const auto& [l, L] : samples) {
    const double r = std::log(L) - (fit.intercept + fit.slope * std::log(l));
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / n);
  return fit;
}

// ---------------------------------------------------------------------------
// Harnack

HarnackReport harnack_ratios(const EigenPair& pair, const PixelDecomposition& decomposition,
                             std::span<const double> eps_grid) {
  const Surface& s = *pair.surface;
  HarnackReport rep;
  rep.eps_grid.assign(eps_grid.begin(), eps_grid.end());
  for (double e : eps_grid)
    if (!(e > 0)) throw DomainError("Harnack levels must be > 0");
  const auto& u = pair.values;
  const auto grad = vertex_gradients(pair);
  const auto hess = vertex_hessians(pair);

  for (std::size_t p = 0; p < decomposition.pixels.size(); ++p) {
    const auto& px = decomposition.pixels[p];
    // local adjacency through pixel triangles
    std::map<int, std::vector<int>> adj;
    for (int t : px.triangles) {
      const auto& tri = s.triangles()[static_cast<std::size_t>(t)];
      for (int k = 0; k < 3; ++k) {
        adj[tri[k]].push_back(tri[(k + 1) % 3]);
        adj[tri[k]].push_back(tri[(k + 2) % 3]);
      }
    }
    for (auto& [v, n] : adj) {
      std::sort(n.begin(), n.end());
      n.erase(std::unique(n.begin(), n.end()), n.end());
    }
    for (double eps : eps_grid) {
      std::map<int, int> label;
      int comps = 0;
      for (const auto& [v0, n0] : adj) {
        if (std::abs(u[v0]) <= eps || label.count(v0)) continue;
        const int id = comps++;
        const int sg = u[v0] > 0 ? 1 : -1;
        std::vector<int> members;
        std::deque<int> queue{v0};
        label[v0] = id;
        while (!queue.empty()) {
          const int v = queue.front();
          queue.pop_front();
          members.push_back(v);
          for (int w : adj[v])
            if (!label.count(w) && std::abs(u[w]) > eps && (u[w] > 0 ? 1 : -1) == sg) {
              label[w] = id;
              queue.push_back(w);
            }
        }
        HarnackRecord r;
        r.pixel = static_cast<int>(p);
        r.epsilon = eps;
        r.component = id;
        r.vertex_count = static_cast<int>(members.size());
        double usup = 0.0;
        r.grad_inf = kInf;
        r.hess_inf = kInf;
        for (int v : members) {
          usup = std::max(usup, std::abs(u[v]));
          const double gn = grad[static_cast<std::size_t>(v)].norm();
          r.grad_sup = std::max(r.grad_sup, gn);
          r.grad_inf = std::min(r.grad_inf, gn);
          r.hess_sup = std::max(r.hess_sup, hess[static_cast<std::size_t>(v)]);
          r.hess_inf = std::min(r.hess_inf, hess[static_cast<std::size_t>(v)]);
        }
        r.c20 = usup / eps;
        // log-gradient ratio with a discrete bump supported inside the component
        std::sort(members.begin(), members.end());
        auto in = [&](int v) { return std::binary_search(members.begin(), members.end(), v); };
        std::unordered_map<int, double> zeta;
        for (int v : members) {
          bool inner = true;
          for (int w : adj[v]) inner = inner && in(w);
          zeta[v] = inner ? 1.0 : 0.0;
        }
        double num = 0.0, den = 0.0;
        for (int t : px.triangles) {
          const auto& tri = s.triangles()[static_cast<std::size_t>(t)];
          if (!in(tri[0]) || !in(tri[1]) || !in(tri[2])) continue;
          const auto c = s.corners(t);
          const Vec3 nrm = (c[1] - c[0]).cross(c[2] - c[0]);
          const double twice = nrm.norm();
          const Vec3 nh = nrm / twice;
          Vec3 gz = Vec3::Zero(), gl = Vec3::Zero();
          double zbar = 0.0;
          for (int k = 0; k < 3; ++k) {
            const Vec3 rot = nh.cross(c[(k + 2) % 3] - c[(k + 1) % 3]) / twice;
            gz += zeta[tri[k]] * rot;
            gl += std::log(std::abs(u[tri[k]]) + eps) * rot;
            zbar += zeta[tri[k]] / 3.0;
          }
          const double a = s.triangle_area(t);
          num += a * zbar * zbar * gl.squaredNorm();
          den += a * (gz.squaredNorm() + zbar * zbar);
        }
        r.log_gradient_ratio = den > 0 ? num / den : 0.0;
        rep.records.push_back(r);
      }
      if (comps == 0) {
        HarnackRecord r;
        r.pixel = static_cast<int>(p);
        r.epsilon = eps;
        r.empty = true;
        rep.records.push_back(r);
        ++rep.empty_records;
      }
    }
  }

  for (std::size_t f = 0; f < decomposition.fronts.size(); ++f) {
    const auto& front = decomposition.fronts[f];
    for (double eps : eps_grid) {
      FrontHarnackRecord r;
      r.front = static_cast<int>(f);
      r.epsilon = eps;
      double usup = 0.0;
      r.grad_inf = kInf;
      for (const auto& loc : front.arc.locations) {
        const double val = pair.value_at(loc);
        if (std::abs(val) <= eps) continue;
        ++r.samples;
        usup = std::max(usup, std::abs(val));
        const double gn = pair.gradients[static_cast<std::size_t>(loc.triangle)].norm();
        r.grad_sup = std::max(r.grad_sup, gn);
        r.grad_inf = std::min(r.grad_inf, gn);
      }
      r.empty = r.samples == 0;
      if (r.empty) {
        r.grad_inf = 0.0;
        ++rep.empty_records;
      }
      r.c30 = usup / eps;
      rep.front_records.push_back(r);
    }
  }
  return rep;
}

BernsteinRatios bernstein_ratios(const EigenPair& pair, const Region& region, double eps, int dimension) {
  if (!(eps > 0)) throw DomainError("Bernstein level must be > 0");
  const Surface& s = *pair.surface;
  const auto& u = pair.values;
  const auto grad = vertex_gradients(pair);
  const auto hess = vertex_hessians(pair);
  BernsteinRatios b;
  const double root = std::sqrt(pair.lambda);
  const double power = std::pow(pair.lambda, dimension / 2.0 + 1.0);
  double gsup = 0.0, hsup = 0.0;
  for (int v : unique_vertices(s, region.triangles)) {
    const double den = std::abs(u[static_cast<std::size_t>(v)]) + eps;
    gsup = std::max(gsup, grad[static_cast<std::size_t>(v)].norm() / den);
    hsup = std::max(hsup, hess[static_cast<std::size_t>(v)] / den);
  }
  b.grad_ratio = gsup / root;
  b.hess_ratio = hsup / pair.lambda;
  b.grad_ratio_power = gsup / power;
  b.hess_ratio_power = hsup / power;
  return b;
}

// ---------------------------------------------------------------------------
// Nodal-domain Dirichlet check

DomainEigencheck nodal_domain_eigencheck(const EigenPair& pair, std::span<const int> domain_vertices,
                                         int dimension) {
  const Surface& s = *pair.surface;
  std::vector<int> dom(domain_vertices.begin(), domain_vertices.end());
  std::sort(dom.begin(), dom.end());
  dom.erase(std::unique(dom.begin(), dom.end()), dom.end());
  if (dom.empty()) throw DomainError("empty domain");
  if (dom.size() >= s.vertex_count()) throw DomainError("domain has no boundary vertices for the Dirichlet problem");
  std::vector<int> index(s.vertex_count(), -1);
  for (std::size_t i = 0; i < dom.size(); ++i) index[static_cast<std::size_t>(dom[i])] = static_cast<int>(i);

  DomainEigencheck out;
  for (int v : dom) {
    bool inner = true;
    for (int w : s.vertex_neighbors()[static_cast<std::size_t>(v)]) inner = inner && index[static_cast<std::size_t>(w)] >= 0;
    out.interior_vertices += inner ? 1 : 0;
  }
  std::vector<double> chi(s.vertex_count(), 0.0);
  for (int v : dom) chi[static_cast<std::size_t>(v)] = 1.0;
  std::vector<double> neg(chi.size());
  for (std::size_t v = 0; v < chi.size(); ++v) neg[v] = -chi[v];
  out.area = sublevel_area(s, neg, -0.5);
  for (const auto& l : chain_contour(s, contour_segments(s, chi, 0.5))) out.boundary_length += l.length();
  if (out.interior_vertices < 10) {
    out.skipped = true;
    return out;
  }

  const auto ops = assemble_laplacian(pair.surface);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < ops.stiffness.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(ops.stiffness, k); it; ++it) {
      const int i = index[static_cast<std::size_t>(it.row())], j = index[static_cast<std::size_t>(it.col())];
      if (i >= 0 && j >= 0) trip.emplace_back(i, j, it.value());
    }
  const auto n = static_cast<Eigen::Index>(dom.size());
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::VectorXd M(n);
  for (Eigen::Index i = 0; i < n; ++i) M[i] = ops.mass[dom[static_cast<std::size_t>(i)]];
  const auto res = shift_invert_lanczos(K, M, 1, 0.0);
  out.lambda1_dirichlet = res.values.front();
  out.relative_gap = pair.lambda > 0 ? std::abs(out.lambda1_dirichlet - pair.lambda) / pair.lambda : kInf;
  const double scale = std::pow(out.area, 2.0 / std::max(1, dimension - 1));
  out.cheeger_lhs = out.lambda1_dirichlet * scale;
  const double h = out.boundary_length / out.area;
  out.cheeger_rhs = 0.25 * h * h * scale;
  return out;
}

DomainEigencheck nodal_domain_eigencheck(const EigenPair& pair, const NodalDomainSet& domains, int domain,
                                         int dimension) {
  if (domain < 0 || domain >= domains.count) throw DomainError("domain index out of range");
  auto out = nodal_domain_eigencheck(pair, domains.vertices[static_cast<std::size_t>(domain)], dimension);
  // exact volume and nodal boundary of the domain
  const NodalSet set = extract_nodal_set(pair);
  out.area = domains.volumes[static_cast<std::size_t>(domain)];
  out.boundary_length = nodal_length(set, Region{domains.triangles[static_cast<std::size_t>(domain)], {}});
  if (!out.skipped) {
    const double scale = std::pow(out.area, 2.0 / std::max(1, dimension - 1));
    out.cheeger_lhs = out.lambda1_dirichlet * scale;
    const double h = out.boundary_length / out.area;
    out.cheeger_rhs = 0.25 * h * h * scale;
  }
  return out;
}

// ---------------------------------------------------------------------------

FrontZeros front_restriction_zeros(const EigenPair& pair, const Polyline& arc) {
  const Surface& s = *pair.surface;
  FrontZeros out;
  out.arc_length = arc.length();
  if (arc.points.size() < 2 || !(out.arc_length > 0)) throw DomainError("front arc needs positive length");
  const int need = static_cast<int>(std::ceil(8.0 * std::sqrt(pair.lambda) * out.arc_length)) + 1;
  const int n = std::max({need, 2 * static_cast<int>(arc.points.size()), 64});
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < arc.points.size(); ++i) cum.push_back(cum.back() + (arc.points[i] - arc.points[i - 1]).norm());
  int prev_sign = 0;
  std::size_t seg = 0;
  for (int k = 0; k < n; ++k) {
    const double target = out.arc_length * k / (n - 1);
    while (seg + 2 < cum.size() && cum[seg + 1] < target) ++seg;
    const double span = cum[seg + 1] - cum[seg];
    const double w = span > 0 ? std::clamp((target - cum[seg]) / span, 0.0, 1.0) : 0.0;
    Vec3 p = (1 - w) * arc.points[seg] + w * arc.points[seg + 1];
    p = s.kind() == SurfaceKind::unit_sphere ? Vec3(p.normalized()) : s.wrap(p);
    const double val = pair.evaluate(p);
    const int sg = val < 0 ? -1 : 1;
    if (k > 0 && sg != prev_sign) ++out.zero_count;
    prev_sign = sg;
  }
  out.samples = n;
  out.normalized = out.zero_count / (std::sqrt(pair.lambda) * out.arc_length);
  return out;
}

}  // namespace geonodal
