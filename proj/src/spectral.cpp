#include "geonodal/spectral.hpp"

#include "geonodal/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace geonodal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double trig(TorusBranch b, double x) { return b == TorusBranch::sine ? std::sin(x) : std::cos(x); }
double dtrig(TorusBranch b, double x) { return b == TorusBranch::sine ? std::cos(x) : -std::sin(x); }

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void validate(const ClosedFormFamily& family, const Surface& surface) {
  std::visit(overloaded{
                 [&](const SphereMode& s) {
                   if (surface.kind() != SurfaceKind::unit_sphere)
                     throw DomainError("spherical harmonics need the unit sphere");
                   if (s.l < 0 || std::abs(s.m) > s.l) throw DomainError("spherical harmonic needs 0 <= |m| <= l");
                 },
                 [&](const TorusMode& t) {
                   if (surface.kind() != SurfaceKind::flat_torus) throw DomainError("torus modes need a flat torus");
                   if (t.m == 0 && t.n == 0) throw DomainError("torus mode (0, 0) is excluded");
                 },
                 [&](const TorusProductMode& t) {
                   if (surface.kind() != SurfaceKind::flat_torus) throw DomainError("torus modes need a flat torus");
                   if (t.m < 0 || t.n < 0) throw DomainError("torus product indices must be >= 0");
                   if ((t.m == 0 && t.branch_u == TorusBranch::sine) ||
                       (t.n == 0 && t.branch_v == TorusBranch::sine))
                     throw DomainError("torus product mode vanishes identically");
                   if (t.m == 0 && t.n == 0) throw DomainError("torus mode (0, 0) is excluded");
                 },
             },
             family);
}

// Legendre P_l and its derivative at z in [-1, 1].
std::pair<double, double> legendre_with_derivative(int l, double z) {
  if (l == 0) return {1.0, 0.0};
  double p0 = 1.0, p1 = z;
  for (int k = 2; k <= l; ++k) {
    const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  double dp;
  if (std::abs(1.0 - z * z) < 1e-14) {
    dp = (z > 0 ? 1.0 : ((l + 1) % 2 == 0 ? 1.0 : -1.0)) * l * (l + 1) / 2.0;
  } else {
    dp = l * (p0 - z * p1) / (1.0 - z * z);
  }
  return {p1, dp};
}

double sphere_value(const SphereMode& s, const Vec3& p) {
  const Vec3 q = p.normalized();
  const double z = std::clamp(q.z(), -1.0, 1.0);
  const unsigned am = static_cast<unsigned>(std::abs(s.m));
  const double plm = std::assoc_legendre(static_cast<unsigned>(s.l), am, z);
  if (s.m == 0) return plm;
  const double phi = std::atan2(q.y(), q.x());
  return s.m > 0 ? plm * std::cos(s.m * phi) : plm * std::sin(am * phi);
}

}  // namespace

std::string describe(const ClosedFormFamily& family) {
  return std::visit(
      overloaded{
          [](const SphereMode& s) { return "sphere(l=" + std::to_string(s.l) + ",m=" + std::to_string(s.m) + ")"; },
          [](const TorusMode& t) {
            return "torus(m=" + std::to_string(t.m) + ",n=" + std::to_string(t.n) + "," +
                   (t.branch == TorusBranch::sine ? "sine" : "cosine") + ")";
          },
          [](const TorusProductMode& t) {
            return "torus_product(m=" + std::to_string(t.m) + ",n=" + std::to_string(t.n) + "," +
                   (t.branch_u == TorusBranch::sine ? "sine" : "cosine") + "," +
                   (t.branch_v == TorusBranch::sine ? "sine" : "cosine") + ")";
          },
      },
      family);
}

double closed_form_eigenvalue(const ClosedFormFamily& family, const Surface& surface) {
  validate(family, surface);
  return std::visit(overloaded{
                        [](const SphereMode& s) { return static_cast<double>(s.l) * (s.l + 1); },
                        [&](const TorusMode& t) {
                          const double a = t.m / surface.period_u(), b = t.n / surface.period_v();
                          return kTwoPi * kTwoPi * (a * a + b * b);
                        },
                        [&](const TorusProductMode& t) {
                          const double a = t.m / surface.period_u(), b = t.n / surface.period_v();
                          return kTwoPi * kTwoPi * (a * a + b * b);
                        },
                    },
                    family);
}

double closed_form_value(const ClosedFormFamily& family, const Surface& surface, const Vec3& p) {
  return std::visit(overloaded{
                        [&](const SphereMode& s) { return sphere_value(s, p); },
                        [&](const TorusMode& t) {
                          return trig(t.branch, kTwoPi * (t.m * p.x() / surface.period_u() +
                                                          t.n * p.y() / surface.period_v()));
                        },
                        [&](const TorusProductMode& t) {
                          return trig(t.branch_u, kTwoPi * t.m * p.x() / surface.period_u()) *
                                 trig(t.branch_v, kTwoPi * t.n * p.y() / surface.period_v());
                        },
                    },
                    family);
}

Vec3 closed_form_gradient(const ClosedFormFamily& family, const Surface& surface, const Vec3& p) {
  return std::visit(
      overloaded{
          [&](const SphereMode& s) -> Vec3 {
            const Vec3 q = p.normalized();
            if (s.m == 0) {
              const auto [val, d] = legendre_with_derivative(s.l, std::clamp(q.z(), -1.0, 1.0));
              (void)val;
              const Vec3 grad_z = Vec3::UnitZ() - q.z() * q;
              return d * grad_z;
            }
            // central differences in the tangent plane
            Vec3 t1 = q.cross(std::abs(q.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY()).normalized();
            Vec3 t2 = q.cross(t1);
            const double h = 1e-6;
            auto f = [&](const Vec3& x) { return sphere_value(s, x.normalized()); };
            const double g1 = (f(q + h * t1) - f(q - h * t1)) / (2 * h);
            const double g2 = (f(q + h * t2) - f(q - h * t2)) / (2 * h);
            return g1 * t1 + g2 * t2;
          },
          [&](const TorusMode& t) -> Vec3 {
            const double ku = kTwoPi * t.m / surface.period_u(), kv = kTwoPi * t.n / surface.period_v();
            const double d = dtrig(t.branch, ku * p.x() + kv * p.y());
            return {d * ku, d * kv, 0.0};
          },
          [&](const TorusProductMode& t) -> Vec3 {
            const double ku = kTwoPi * t.m / surface.period_u(), kv = kTwoPi * t.n / surface.period_v();
            return {ku * dtrig(t.branch_u, ku * p.x()) * trig(t.branch_v, kv * p.y()),
                    kv * trig(t.branch_u, ku * p.x()) * dtrig(t.branch_v, kv * p.y()), 0.0};
          },
      },
      family);
}

// ---------------------------------------------------------------------------

double EigenPair::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

double EigenPair::value_at(const SurfacePoint& p) const {
  const auto& tri = surface->triangles()[p.triangle];
  return p.bary[0] * values[tri[0]] + p.bary[1] * values[tri[1]] + p.bary[2] * values[tri[2]];
}

double EigenPair::evaluate(const Vec3& position) const {
  if (family) return normalization * closed_form_value(*family, *surface, position);
  return value_at(surface->locate(position));
}

Vec3 EigenPair::gradient_at(const Vec3& position) const {
  if (family) return normalization * closed_form_gradient(*family, *surface, position);
  return gradients[static_cast<std::size_t>(surface->locate(position).triangle)];
}

Vec3 triangle_gradient(const Surface& surface, std::span<const double> values, int t) {
  const auto& tri = surface.triangles()[static_cast<std::size_t>(t)];
  const auto c = surface.corners(t);
  const Vec3 n = (c[1] - c[0]).cross(c[2] - c[0]);
  const double twice_area = n.norm();
  const Vec3 nhat = n / twice_area;
  Vec3 grad = Vec3::Zero();
  for (int k = 0; k < 3; ++k) grad += values[tri[k]] * nhat.cross(c[(k + 2) % 3] - c[(k + 1) % 3]);
  return grad / twice_area;
}

std::vector<Vec3> triangle_gradients(const Surface& surface, std::span<const double> values) {
  std::vector<Vec3> g(surface.triangle_count());
  for (std::size_t t = 0; t < g.size(); ++t) g[t] = triangle_gradient(surface, values, static_cast<int>(t));
  return g;
}

EigenPair closed_form_eigenpair(const ClosedFormFamily& family, SurfacePtr surface) {
  validate(family, *surface);
  EigenPair pair;
  pair.surface = surface;
  pair.lambda = closed_form_eigenvalue(family, *surface);
  pair.family = family;
  pair.source = EigenSource::closed_form;
  const auto& verts = surface->vertices();
  pair.values.resize(verts.size());
  for (std::size_t v = 0; v < verts.size(); ++v) pair.values[v] = closed_form_value(family, *surface, verts[v]);
  double norm2 = 0.0;
  const auto& mass = surface->vertex_areas();
  for (std::size_t v = 0; v < verts.size(); ++v) norm2 += mass[v] * pair.values[v] * pair.values[v];
  if (!(norm2 > 0)) throw DomainError("closed-form eigenfunction vanishes on the sample mesh");
  pair.normalization = 1.0 / std::sqrt(norm2);
  for (double& x : pair.values) x *= pair.normalization;
  pair.gradients = triangle_gradients(*surface, pair.values);
  return pair;
}

EigenPair sampled_pair(SurfacePtr surface, double lambda, std::vector<double> values, bool normalize) {
  if (values.size() != surface->vertex_count()) throw DomainError("value count does not match vertex count");
  if (!(lambda >= 0)) throw DomainError("eigenvalue must be >= 0");
  EigenPair pair;
  pair.surface = surface;
  pair.lambda = lambda;
  pair.values = std::move(values);
  pair.source = EigenSource::sampled;
  if (normalize) {
    double norm2 = 0.0;
    const auto& mass = surface->vertex_areas();
    for (std::size_t v = 0; v < pair.values.size(); ++v) norm2 += mass[v] * pair.values[v] * pair.values[v];
    if (!(norm2 > 0)) throw DomainError("cannot normalize an identically zero function");
    pair.normalization = 1.0 / std::sqrt(norm2);
    for (double& x : pair.values) x *= pair.normalization;
  }
  pair.gradients = triangle_gradients(*surface, pair.values);
  return pair;
}

Vec3 evaluate_gradient(const EigenPair& pair, int triangle) {
  if (triangle < 0 || static_cast<std::size_t>(triangle) >= pair.gradients.size())
    throw DomainError("triangle index out of range");
  return pair.gradients[static_cast<std::size_t>(triangle)];
}

// ---------------------------------------------------------------------------
// Assembly

DiscreteOperatorPair assemble_laplacian(SurfacePtr surface) {
  DiscreteOperatorPair ops;
  ops.surface = surface;
  const auto n = static_cast<Eigen::Index>(surface->vertex_count());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(surface->triangle_count() * 12);
  const auto& tris = surface->triangles();
  constexpr double kFlat = std::numbers::pi - 1e-6;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    const auto c = surface->corners(static_cast<int>(t));
    for (int k = 0; k < 3; ++k) {
      const Vec3 a = c[(k + 1) % 3] - c[k], b = c[(k + 2) % 3] - c[k];
      const double angle = std::atan2(a.cross(b).norm(), a.dot(b));
      if (angle >= kFlat && !ops.ill_conditioned) {
        ops.ill_conditioned = true;
        ops.warnings.push_back("triangle " + std::to_string(t) + " has a near-flat angle");
      }
      const double w = 0.5 * a.dot(b) / a.cross(b).norm();  // half cotangent of corner k
      const int i = tris[t][(k + 1) % 3], j = tris[t][(k + 2) % 3];
      trip.emplace_back(i, j, -w);
      trip.emplace_back(j, i, -w);
      trip.emplace_back(i, i, w);
      trip.emplace_back(j, j, w);
    }
  }
  ops.stiffness.resize(n, n);
  ops.stiffness.setFromTriplets(trip.begin(), trip.end());
  ops.stiffness.makeCompressed();
  ops.mass = Eigen::Map<const Eigen::VectorXd>(surface->vertex_areas().data(), n);
  return ops;
}

// ---------------------------------------------------------------------------
// Block shift-invert Lanczos

namespace {

// Orthonormalize the columns of W against themselves (modified Gram-Schmidt, two passes).
// Columns that collapse are replaced by fresh random directions orthogonal to `basis`
// and the earlier columns; the matching row of R is zeroed.
Eigen::MatrixXd orthonormalize(Eigen::MatrixXd& W, const std::vector<Eigen::MatrixXd>& basis,
                               std::mt19937_64& rng) {
  const Eigen::Index b = W.cols();
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(b, b);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (Eigen::Index c = 0; c < b; ++c) {
    const double before = W.col(c).norm();
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index p = 0; p < c; ++p) {
        const double r = W.col(p).dot(W.col(c));
        R(p, c) += r;
        W.col(c) -= r * W.col(p);
      }
    double nrm = W.col(c).norm();
    if (nrm <= 1e-10 * std::max(before, 1e-300)) {
      // rank deficiency: restart this column
      for (int attempt = 0; attempt < 8; ++attempt) {
        for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, c) = uni(rng);
        for (int pass = 0; pass < 2; ++pass) {
          for (const auto& Q : basis) W.col(c) -= Q * (Q.transpose() * W.col(c));
          for (Eigen::Index p = 0; p < c; ++p) W.col(c) -= W.col(p).dot(W.col(c)) * W.col(p);
        }
        nrm = W.col(c).norm();
        if (nrm > 1e-8) break;
      }
      for (Eigen::Index p = 0; p < b; ++p) R(p, c) = p < c ? 0.0 : R(p, c);
      W.col(c) /= nrm;
      R(c, c) = 0.0;
      continue;
    }
    R(c, c) = nrm;
    W.col(c) /= nrm;
  }
  return R;
}

}  // namespace

GeneralizedEigenResult shift_invert_lanczos(const Eigen::SparseMatrix<double>& stiffness,
                                            const Eigen::VectorXd& mass, int count, double shift,
                                            const EigenSolverOptions& options) {
  using Eigen::Index;
  using Eigen::MatrixXd;
  const Index n = stiffness.rows();
  if (count < 1) throw DomainError("eigen solve needs count >= 1");
  if (count > n) throw DomainError("requested more eigenpairs than unknowns");
  if (mass.size() != n || (mass.array() <= 0).any()) throw DomainError("mass must be positive and match the stiffness size");

  Eigen::SparseMatrix<double> shifted = stiffness;
  for (Index i = 0; i < n; ++i) shifted.coeffRef(i, i) -= shift * mass[i];
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) throw SolverError("factorization of K - shift*M failed");
  {
    const Eigen::VectorXd d = ldlt.vectorD();
    const double big = d.cwiseAbs().maxCoeff();
    if (d.cwiseAbs().minCoeff() <= 1e-13 * big) throw DomainError("shift coincides with an eigenvalue");
  }
  const Eigen::VectorXd sqrt_m = mass.cwiseSqrt();
  auto apply = [&](const MatrixXd& Y) -> MatrixXd {
    MatrixXd X = sqrt_m.asDiagonal() * Y;
    X = ldlt.solve(X);
    return sqrt_m.asDiagonal() * X;
  };

  const Index b = std::min<Index>(n, options.block_size > 0 ? options.block_size : std::clamp(count, 4, 16));
  const Index cap = std::min<Index>(n, options.max_basis > 0 ? options.max_basis
                                                             : std::max<Index>(60 * b, 20 * count + 200));
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<MatrixXd> Q;
  MatrixXd start(n, b);
  for (Index j = 0; j < b; ++j)
    for (Index i = 0; i < n; ++i) start(i, j) = uni(rng);
  orthonormalize(start, Q, rng);
  Q.push_back(start);

  MatrixXd T = MatrixXd::Zero(0, 0);
  MatrixXd B_prev;  // B_j: Q_j = ... relation block
  Eigen::VectorXd theta;
  MatrixXd S;
  std::vector<double> ritz_res;
  bool converged = false;
  while (true) {
    const Index j = static_cast<Index>(Q.size()) - 1;
    MatrixXd W = apply(Q[j]);
    MatrixXd A = Q[j].transpose() * W;
    A = 0.5 * (A + A.transpose());
    W -= Q[j] * A;
    if (j > 0) W -= Q[j - 1] * B_prev.transpose();
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& Qi : Q) W -= Qi * (Qi.transpose() * W);

    const Index dim = (j + 1) * b;
    MatrixXd Tn = MatrixXd::Zero(dim, dim);
    if (j > 0) Tn.topLeftCorner(dim - b, dim - b) = T;
    Tn.block(dim - b, dim - b, b, b) = A;
    if (j > 0) {
      Tn.block(dim - b, dim - 2 * b, b, b) = B_prev;
      Tn.block(dim - 2 * b, dim - b, b, b) = B_prev.transpose();
    }
    T = Tn;

    const bool exhausted = dim + b > n || dim + b > cap;
    MatrixXd Bn;
    if (!exhausted) {
      Bn = orthonormalize(W, Q, rng);
    } else {
      Bn = MatrixXd::Zero(b, b);
      // residual block for the Ritz estimate; W is already orthogonal to the basis
      Eigen::HouseholderQR<MatrixXd> qr(W);
      Bn = qr.matrixQR().topRows(b).triangularView<Eigen::Upper>();
    }

    if (dim >= count || exhausted) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(T);
      theta = es.eigenvalues();
      S = es.eigenvectors();
      // descending order of theta = ascending lambda above the shift
      std::vector<Index> order(static_cast<std::size_t>(dim));
      for (Index i = 0; i < dim; ++i) order[static_cast<std::size_t>(i)] = dim - 1 - i;
      ritz_res.assign(static_cast<std::size_t>(count), 0.0);
      converged = true;
      for (int i = 0; i < count; ++i) {
        const Index k = order[static_cast<std::size_t>(i)];
        if (!(theta[k] > 0)) {
          converged = false;
          ritz_res[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
          continue;
        }
        const double r = (Bn * S.block(dim - b, k, b, 1)).norm();
        ritz_res[static_cast<std::size_t>(i)] = r / std::abs(theta[k]);
        if (r > options.tolerance * std::abs(theta[k]) && dim < n) converged = false;
      }
      if (converged) break;
      if (exhausted) {
        if (dim >= n) break;
        throw SolverError("shift-invert Lanczos did not converge within the basis cap", ritz_res);
      }
    }
    Q.push_back(W);
    B_prev = Bn;
  }

  const Index dim = T.rows();
  MatrixXd basis(n, dim);
  for (std::size_t i = 0; i < static_cast<std::size_t>(dim / b); ++i)
    basis.middleCols(static_cast<Index>(i) * b, b) = Q[i];
  GeneralizedEigenResult out;
  out.vectors.resize(n, count);
  std::vector<std::pair<double, Eigen::VectorXd>> pairs;
  for (int i = 0; i < count; ++i) {
    const Index k = dim - 1 - i;
    if (!(theta[k] > 0)) throw SolverError("fewer eigenvalues above the shift than requested");
    Eigen::VectorXd y = basis * S.col(k);
    Eigen::VectorXd u = y.cwiseQuotient(sqrt_m);
    const double mnorm = std::sqrt(u.dot(mass.cwiseProduct(u)));
    u /= mnorm;
    Index imax = 0;
    u.cwiseAbs().maxCoeff(&imax);
    if (u[imax] < 0) u = -u;
    const double lambda = u.dot(stiffness * u);  // u^T M u = 1
    pairs.emplace_back(lambda, std::move(u));
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  for (int i = 0; i < count; ++i) {
    out.values.push_back(pairs[static_cast<std::size_t>(i)].first);
    out.vectors.col(i) = pairs[static_cast<std::size_t>(i)].second;
    const Eigen::VectorXd r = stiffness * out.vectors.col(i) -
                              out.values.back() * mass.cwiseProduct(out.vectors.col(i));
    out.residuals.push_back(r.norm());
  }
  return out;
}

std::vector<EigenPair> solve_eigen(const DiscreteOperatorPair& ops, int count, double shift,
                                   const EigenSolverOptions& options) {
  const auto result = shift_invert_lanczos(ops.stiffness, ops.mass, count, shift, options);
  std::vector<EigenPair> pairs;
  std::vector<double> attained;
  for (int i = 0; i < count; ++i) {
    EigenPair p;
    p.surface = ops.surface;
    p.lambda = std::max(0.0, result.values[static_cast<std::size_t>(i)]);
    p.values.assign(result.vectors.col(i).data(), result.vectors.col(i).data() + result.vectors.rows());
    p.gradients = triangle_gradients(*ops.surface, p.values);
    p.source = EigenSource::fem;
    p.residual = result.residuals[static_cast<std::size_t>(i)];
    p.relative_residual = p.residual / std::max(p.lambda, 1.0);
    attained.push_back(p.relative_residual);
    pairs.push_back(std::move(p));
  }
  for (double r : attained)
    if (r > 1e-8) throw SolverError("eigenpair residual above 1e-8 relative", attained);
  return pairs;
}

}  // namespace geonodal
