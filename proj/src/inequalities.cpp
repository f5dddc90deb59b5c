#include "geonodal/inequalities.hpp"

#include "geonodal/errors.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace geonodal {

namespace {

constexpr double kPi = std::numbers::pi;

double ipow(double x, int e) {
  double r = 1.0;
  for (int k = 0; k < e; ++k) r *= x;
  return r;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Least-squares line y = a + b x.
std::pair<double, double> fit_line(const std::vector<std::pair<double, double>>& pts) {
  const double n = static_cast<double>(pts.size());
  double mx = 0, my = 0;
  for (const auto& [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (!(sxx > 0)) throw DomainError("envelope fit needs spread in the abscissa");
  const double b = sxy / sxx;
  return {my - b * mx, b};
}

/// Lower envelope of (x, y): the minimum y in each of `bins` equal x-bins over [lo, hi].
std::vector<std::pair<double, double>> lower_envelope(const std::vector<std::pair<double, double>>& pts, double lo,
                                                      double hi, int bins, int min_count) {
  std::vector<int> count(static_cast<std::size_t>(bins), 0);
  std::vector<std::pair<double, double>> best(static_cast<std::size_t>(bins),
                                              {0.0, std::numeric_limits<double>::infinity()});
  const double w = (hi - lo) / bins;
  for (const auto& [x, y] : pts) {
    if (x < lo || x > hi) continue;
    const int b = std::min(bins - 1, static_cast<int>((x - lo) / w));
    ++count[static_cast<std::size_t>(b)];
    if (y < best[static_cast<std::size_t>(b)].second) best[static_cast<std::size_t>(b)] = {x, y};
  }
  std::vector<std::pair<double, double>> env;
  for (int b = 0; b < bins; ++b)
    if (count[static_cast<std::size_t>(b)] >= min_count) env.push_back(best[static_cast<std::size_t>(b)]);
  return env;
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const std::size_t i = std::min(v.size() - 1, static_cast<std::size_t>(q * static_cast<double>(v.size())));
  return v[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Polynomial

Polynomial::Polynomial(int dimension, std::map<Exponents, double> terms) : dimension_(dimension) {
  if (dimension < 1) throw DomainError("polynomial dimension must be >= 1");
  for (const auto& [e, c] : terms) add(e, c);
}

void Polynomial::add(const Exponents& e, double c) {
  if (static_cast<int>(e.size()) != dimension_) throw DomainError("exponent tuple has the wrong length");
  for (int k : e)
    if (k < 0) throw DomainError("negative exponent");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.try_emplace(e, 0.0);
  const double before = it->second;
  it->second += c;
  if (std::abs(it->second) <= 1e-13 * std::max({1.0, std::abs(before), std::abs(c)})) terms_.erase(it);
}

Polynomial Polynomial::coordinate(int dimension, int i) {
  if (i < 0 || i >= dimension) throw DomainError("coordinate index out of range");
  Exponents e(static_cast<std::size_t>(dimension), 0);
  e[static_cast<std::size_t>(i)] = 1;
  return Polynomial(dimension, {{e, 1.0}});
}

Polynomial Polynomial::real_power(int m) {
  if (m < 0) throw DomainError("power must be >= 0");
  Polynomial p(2);
  for (int k = 0; k <= m; k += 2) p.add({m - k, k}, ((k / 2) % 2 ? -1.0 : 1.0) * binomial(m, k));
  return p;
}

Polynomial Polynomial::imag_power(int m) {
  if (m < 0) throw DomainError("power must be >= 0");
  Polynomial p(2);
  for (int k = 1; k <= m; k += 2) p.add({m - k, k}, (((k - 1) / 2) % 2 ? -1.0 : 1.0) * binomial(m, k));
  return p;
}

Polynomial Polynomial::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("dimension") || !j.contains("coefficients"))
    throw ConfigError("polynomial JSON needs 'dimension' and 'coefficients'");
  const int n = j.at("dimension").get<int>();
  if (n < 1) throw ConfigError("polynomial dimension must be >= 1");
  Polynomial p(n);
  for (const auto& [key, value] : j.at("coefficients").items()) {
    Exponents e;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, ',')) {
      try {
        std::size_t used = 0;
        e.push_back(std::stoi(part, &used));
        if (used != part.size()) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw ConfigError("bad exponent tuple '" + key + "'");
      }
    }
    if (static_cast<int>(e.size()) != n) throw ConfigError("exponent tuple '" + key + "' has the wrong length");
    try {
      p.add(e, value.get<double>());
    } catch (const DomainError& err) {
      throw ConfigError(err.what());
    }
  }
  return p;
}

nlohmann::json Polynomial::to_json() const {
  nlohmann::json coeffs = nlohmann::json::object();
  for (const auto& [e, c] : terms_) {
    std::string key;
    for (std::size_t i = 0; i < e.size(); ++i) key += (i ? "," : "") + std::to_string(e[i]);
    coeffs[key] = c;
  }
  return {{"dimension", dimension_}, {"coefficients", coeffs}};
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [e, c] : terms_) {
    int s = 0;
    for (int k : e) s += k;
    d = std::max(d, s);
  }
  return d;
}

std::optional<int> Polynomial::homogeneous_degree() const {
  std::optional<int> d;
  for (const auto& [e, c] : terms_) {
    int s = 0;
    for (int k : e) s += k;
    if (d && *d != s) return std::nullopt;
    d = s;
  }
  return d;
}

double Polynomial::evaluate(std::span<const double> x) const {
  double v = 0.0;
  for (const auto& [e, c] : terms_) {
    double t = c;
    for (std::size_t i = 0; i < e.size(); ++i) t *= ipow(x[i], e[i]);
    v += t;
  }
  return v;
}

Eigen::VectorXd Polynomial::gradient(std::span<const double> x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dimension_);
  for (const auto& [e, c] : terms_) {
    for (int i = 0; i < dimension_; ++i) {
      if (e[static_cast<std::size_t>(i)] == 0) continue;
      double t = c * e[static_cast<std::size_t>(i)];
      for (int j = 0; j < dimension_; ++j) {
        const int k = e[static_cast<std::size_t>(j)] - (j == i ? 1 : 0);
        t *= ipow(x[static_cast<std::size_t>(j)], k);
      }
      g[i] += t;
    }
  }
  return g;
}

Polynomial Polynomial::derivative(int i) const {
  Polynomial d(dimension_);
  for (const auto& [e, c] : terms_) {
    if (e[static_cast<std::size_t>(i)] == 0) continue;
    Exponents f = e;
    --f[static_cast<std::size_t>(i)];
    d.add(f, c * e[static_cast<std::size_t>(i)]);
  }
  return d;
}

Polynomial Polynomial::laplacian() const {
  Polynomial l(dimension_);
  for (int i = 0; i < dimension_; ++i) {
    const Polynomial d2 = derivative(i).derivative(i);
    for (const auto& [e, c] : d2.terms()) l.add(e, c);
  }
  return l;
}

std::string Polynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [e, c] : terms_) {
    os << (first ? (c < 0 ? "-" : "") : (c < 0 ? " - " : " + ")) << std::abs(c);
    for (std::size_t i = 0; i < e.size(); ++i)
      if (e[i] > 0) os << "*x" << i << (e[i] > 1 ? "^" + std::to_string(e[i]) : "");
    first = false;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Hardy

std::string to_string(HardyInequality id) {
  switch (id) {
    case HardyInequality::gh1: return "gh1";
    case HardyInequality::gh2: return "gh2";
    case HardyInequality::gh3: return "gh3";
    case HardyInequality::log2d: return "log2d";
  }
  return "?";
}

HardyInequality parse_hardy_inequality(const std::string& name) {
  if (name == "gh1") return HardyInequality::gh1;
  if (name == "gh2") return HardyInequality::gh2;
  if (name == "gh3") return HardyInequality::gh3;
  if (name == "log2d") return HardyInequality::log2d;
  throw ConfigError("unknown inequality '" + name + "'");
}

double hardy_weight(const Polynomial& p, int degree, HardyInequality id, std::span<const double> x, double delta) {
  const double v = p.evaluate(x);
  const double a = std::abs(v);
  if (a == 0.0) return 0.0;
  switch (id) {
    case HardyInequality::gh1: return std::pow(a, -2.0 / degree);
    case HardyInequality::gh2: return p.gradient(x).squaredNorm() / (v * v);
    case HardyInequality::gh3: return std::abs(p.laplacian().evaluate(x) / v);
    case HardyInequality::log2d: {
      const double l = std::abs(std::log(a / delta));
      return l > 0 ? std::pow(a, -2.0 / degree) / l : 0.0;
    }
  }
  return 0.0;
}

GridRayleigh grid_rayleigh_constant(int dimension, int resolution, double spacing, std::span<const char> active,
                                    std::span<const double> weight, double tolerance, int max_iterations) {
  using SpMat = Eigen::SparseMatrix<double>;
  const std::size_t total = active.size();
  std::vector<int> index(total, -1);
  int count = 0;
  for (std::size_t i = 0; i < total; ++i)
    if (active[i]) index[i] = count++;
  if (count == 0) throw DomainError("no active grid nodes");

  std::vector<std::size_t> stride(static_cast<std::size_t>(dimension), 1);
  for (int d = 1; d < dimension; ++d)
    stride[static_cast<std::size_t>(d)] = stride[static_cast<std::size_t>(d - 1)] * static_cast<std::size_t>(resolution);

  const double ks = std::pow(spacing, dimension - 2);
  const double ms = std::pow(spacing, dimension);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(count) * static_cast<std::size_t>(2 * dimension + 1));
  Eigen::VectorXd mass(count);
  for (std::size_t i = 0; i < total; ++i) {
    const int r = index[i];
    if (r < 0) continue;
    trip.emplace_back(r, r, 2.0 * dimension * ks);
    for (int d = 0; d < dimension; ++d) {
      const std::size_t sd = stride[static_cast<std::size_t>(d)];
      const int coord = static_cast<int>((i / sd) % static_cast<std::size_t>(resolution));
      if (coord + 1 < resolution && index[i + sd] >= 0) trip.emplace_back(r, index[i + sd], -ks);
      if (coord > 0 && index[i - sd] >= 0) trip.emplace_back(r, index[i - sd], -ks);
    }
    mass[r] = ms * weight[i];
  }
  if (!(mass.maxCoeff() > 0)) throw DomainError("weight vanishes on every active node (singular mass)");
  SpMat K(count, count);
  K.setFromTriplets(trip.begin(), trip.end());

  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper, Eigen::IncompleteCholesky<double>> cg;
  cg.setTolerance(1e-12);
  cg.compute(K);
  if (cg.info() != Eigen::Success) throw SolverError("stiffness preconditioner failed", {});

  GridRayleigh out;
  Eigen::VectorXd x = Eigen::VectorXd::Ones(count);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(count);
  double prev = 0.0;
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXd y = mass.cwiseProduct(x);
    z = cg.solveWithGuess(y, z);
    if (cg.info() != Eigen::Success) throw SolverError("CG did not converge in the Hardy iteration", {cg.error()});
    const double num = z.dot(mass.cwiseProduct(z));
    const double den = z.dot(K * z);
    const double c = num / den;
    const double knorm = std::sqrt(den);
    x = z / knorm;
    z /= knorm;
    out.c = c;
    out.iterations = it;
    if (it > 1 && std::abs(c - prev) <= tolerance * c) {
      out.converged = true;
      break;
    }
    prev = c;
  }
  return out;
}

HardyEstimate hardy_constant(const Polynomial& p, HardyInequality id, const HardyOptions& o) {
  const auto m = p.homogeneous_degree();
  if (!m) throw DomainError("Hardy constants need a homogeneous nonzero polynomial");
  if (*m < 1) throw DomainError("Hardy constants need degree >= 1");
  const int n = p.dimension();
  if (o.resolution < 2) throw DomainError("resolution must be >= 2");
  if (!(o.upper > o.lower)) throw DomainError("empty box");
  if (id == HardyInequality::log2d) {
    if (n != 2) throw DomainError("the logarithmic variant is two-dimensional");
    if (!(o.delta > 0) || o.delta >= 1) throw DomainError("delta must lie in (0, 1)");
  }
  HardyEstimate est;
  est.polynomial = p;
  est.degree = *m;
  est.id = id;
  est.resolution = o.resolution;
  est.delta = id == HardyInequality::log2d ? o.delta : 0.0;
  const double h = (o.upper - o.lower) / o.resolution;
  est.spacing = h;
  if (id == HardyInequality::log2d && std::abs(std::log(o.delta)) < 1e-3) {
    est.divergent = true;
    est.c = est.normalized = std::numeric_limits<double>::infinity();
    return est;
  }

  std::size_t total = 1;
  for (int d = 0; d < n; ++d) total *= static_cast<std::size_t>(o.resolution);
  std::vector<char> active(total, 0);
  std::vector<double> weight(total, 0.0);
  const double tube = std::max(o.tube_factor * h, o.min_distance);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < total; ++i) {
    std::size_t r = i;
    for (int d = 0; d < n; ++d) {
      x[static_cast<std::size_t>(d)] = o.lower + (static_cast<double>(r % static_cast<std::size_t>(o.resolution)) + 0.5) * h;
      r /= static_cast<std::size_t>(o.resolution);
    }
    const double v = std::abs(p.evaluate(x));
    const double g = p.gradient(x).norm();
    const double dist = g > 0 ? v / g : (v > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (dist < tube) continue;
    if (id == HardyInequality::log2d && g > 0 && std::abs(v - o.delta) / g < o.tube_factor * h) continue;
    const double w = hardy_weight(p, *m, id, x, o.delta);
    if (!std::isfinite(w)) continue;
    active[i] = 1;
    weight[i] = w;
    est.max_weight = std::max(est.max_weight, w);
    ++est.active_nodes;
  }
  if (est.active_nodes == 0) throw DomainError("the exclusion tube covers the whole box");
  if (!(est.max_weight > 0)) throw DomainError("weight vanishes identically (singular mass)");
  const auto r = grid_rayleigh_constant(n, o.resolution, h, active, weight, o.tolerance, o.max_iterations);
  est.c = r.c;
  est.sigma = 1.0 / r.c;
  est.iterations = r.iterations;
  est.converged = r.converged;
  est.normalized = id == HardyInequality::log2d ? r.c * std::abs(std::log(o.delta)) : r.c;
  return est;
}

std::vector<HardyEstimate> hardy2d_log_constant(const Polynomial& p, std::span<const double> deltas,
                                                HardyOptions options) {
  std::vector<HardyEstimate> out;
  for (double d : deltas) {
    if (d >= 1) throw DomainError("delta must be < 1");
    options.delta = d;
    out.push_back(hardy_constant(p, HardyInequality::log2d, options));
  }
  return out;
}

HardyRefinement hardy_refinement(const Polynomial& p, HardyInequality id, std::span<const int> resolutions,
                                 HardyOptions options) {
  HardyRefinement r;
  for (int n : resolutions) {
    options.resolution = n;
    r.estimates.push_back(hardy_constant(p, id, options));
    const auto& e = r.estimates;
    if (e.size() > 1 && e.back().c < e[e.size() - 2].c * (1.0 - 1e-3)) r.monotone = false;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Lojasiewicz

namespace {

/// Zero crossings of h on grid edges over the square [lo, hi]^2.
std::vector<Eigen::Vector2d> zero_points(const Polynomial& h, double lo, double hi, int cells) {
  const double step = (hi - lo) / cells;
  std::vector<double> v(static_cast<std::size_t>((cells + 1) * (cells + 1)));
  for (int j = 0; j <= cells; ++j)
    for (int i = 0; i <= cells; ++i) {
      const double x[2] = {lo + i * step, lo + j * step};
      v[static_cast<std::size_t>(j * (cells + 1) + i)] = h.evaluate(x);
    }
  std::vector<Eigen::Vector2d> pts;
  auto at = [&](int i, int j) { return v[static_cast<std::size_t>(j * (cells + 1) + i)]; };
  for (int j = 0; j <= cells; ++j)
    for (int i = 0; i <= cells; ++i) {
      const double a = at(i, j);
      const Eigen::Vector2d p(lo + i * step, lo + j * step);
      if (a == 0.0) {
        pts.push_back(p);
        continue;
      }
      if (i < cells && a * at(i + 1, j) < 0) pts.emplace_back(p.x() + step * a / (a - at(i + 1, j)), p.y());
      if (j < cells && a * at(i, j + 1) < 0) pts.emplace_back(p.x(), p.y() + step * a / (a - at(i, j + 1)));
    }
  return pts;
}

}  // namespace

LojasiewiczFit lojasiewicz_fit(const Polynomial& h, double lower, double upper, int count, std::uint64_t seed) {
  if (h.is_zero()) throw DomainError("h is identically zero");
  if (!h.is_harmonic()) throw DomainError("h is not harmonic");
  if (count < 10000) throw DomainError("Lojasiewicz fit needs at least 1e4 samples");
  if (!(upper > lower)) throw DomainError("empty sample box");
  const int n = h.dimension();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(lower, upper);
  auto draw = [&](int k) {
    std::vector<std::vector<double>> xs(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(n)));
    for (auto& x : xs)
      for (auto& c : x) c = uni(rng);
    return xs;
  };

  LojasiewiczFit fit;
  fit.polynomial = h;
  fit.samples = count;
  const auto xs = draw(count);
  std::vector<std::pair<double, double>> pts;
  std::vector<double> logh;
  for (const auto& x : xs) {
    const double v = std::abs(h.evaluate(x));
    const double g = h.gradient(x).norm();
    if (v > 0 && g > 0) {
      pts.emplace_back(std::log(v), std::log(g));
      logh.push_back(std::log(v));
    }
  }
  if (pts.size() < 100) throw DomainError("too few samples off the zero set");
  const double lo = quantile(logh, 0.1);
  const double hi = *std::max_element(logh.begin(), logh.end());
  fit.envelope = lower_envelope(pts, lo, hi, 40, 5);
  if (fit.envelope.size() < 2) {
    // constant |h| (no spread): gradient does not depend on |h|
    fit.ell1 = 1.0;
  } else {
    const auto [a, b] = fit_line(fit.envelope);
    fit.ell1 = std::clamp(1.0 - b, 1e-12, 1.0);
    fit.c1_envelope = std::exp(a);
  }
  const double expo = 1.0 - fit.ell1;
  fit.c1 = std::numeric_limits<double>::infinity();
  for (const auto& [lv, lg] : pts) fit.c1 = std::min(fit.c1, std::exp(lg - expo * lv));
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& [lv, lg] : pts) {
    const double ratio = std::exp(lg - expo * lv);
    if (ratio < fit.c1 * (1 - 1e-9)) ++fit.violations;
    worst = std::min(worst, ratio / fit.c1 - 1.0);
  }
  fit.worst_margin = worst;
  for (const auto& x : draw(count)) {
    const double v = std::abs(h.evaluate(x));
    const double g = h.gradient(x).norm();
    if (v > 0 && g < fit.c1 * (1 - 1e-9) * std::pow(v, expo)) ++fit.holdout_violations;
  }

  fit.ell2 = fit.c2 = std::numeric_limits<double>::quiet_NaN();
  if (n == 2) {
    const double margin = 0.25 * (upper - lower);
    const auto zs = zero_points(h, lower - margin, upper + margin, 1024);
    if (!zs.empty()) {
      std::vector<std::pair<double, double>> dp;
      std::vector<double> logd;
      for (const auto& x : xs) {
        const Eigen::Vector2d p(x[0], x[1]);
        double d2 = std::numeric_limits<double>::infinity();
        for (const auto& z : zs) d2 = std::min(d2, (z - p).squaredNorm());
        const double v = std::abs(h.evaluate(x));
        if (d2 > 0 && v > 0) {
          dp.emplace_back(0.5 * std::log(d2), std::log(v));
          logd.push_back(0.5 * std::log(d2));
        }
      }
      const double dlo = quantile(logd, 0.01);
      const double dhi = *std::max_element(logd.begin(), logd.end());
      const auto env = lower_envelope(dp, dlo, dhi, 40, 5);
      if (env.size() >= 2) {
        fit.ell2 = fit_line(env).second;
        fit.c2 = std::numeric_limits<double>::infinity();
        for (const auto& [ld, lv] : dp) fit.c2 = std::min(fit.c2, std::exp(lv - fit.ell2 * ld));
      }
    }
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Harmonic approximation

std::function<Eigen::Matrix2d(double, double)> standard_perturbation(double mu, double rho) {
  const double s = mu * rho * rho;
  return [s](double x, double y) {
    Eigen::Matrix2d r;
    const double a = std::sin(kPi * x) * std::sin(kPi * y);
    const double b = 0.5 * std::cos(kPi * x) * std::cos(kPi * y);
    const double c = 0.25 * std::sin(kPi * (x + y));
    r << s * a, s * c, s * c, s * b;
    return r;
  };
}

namespace {

struct ChartGrid {
  int n = 0;  // interior nodes per axis
  int g = 0;  // n + 2
  double h = 0.0;
  std::size_t id(int i, int j) const { return static_cast<std::size_t>(j * g + i); }
  double coord(int i) const { return i * h; }
};

double h1_norm(const ChartGrid& cg, const std::vector<double>& f) {
  double s = 0.0;
  for (int j = 0; j < cg.g; ++j)
    for (int i = 0; i < cg.g; ++i) {
      const double v = f[cg.id(i, j)];
      s += cg.h * cg.h * v * v;
      if (i + 1 < cg.g) s += (f[cg.id(i + 1, j)] - v) * (f[cg.id(i + 1, j)] - v);
      if (j + 1 < cg.g) s += (f[cg.id(i, j + 1)] - v) * (f[cg.id(i, j + 1)] - v);
    }
  return std::sqrt(s);
}

}  // namespace

HarmonicApproxRun harmonic_approximation(const HarmonicApproxProblem& pr) {
  if (pr.resolution < 4) throw DomainError("harmonic approximation needs resolution >= 4");
  if (!pr.boundary || !pr.perturbation) throw DomainError("boundary data and perturbation are required");
  if (pr.mu < 0 || !(pr.rho > 0)) throw DomainError("mu must be >= 0 and rho > 0");
  if (pr.iterations < 1) throw DomainError("iterations must be >= 1");
  ChartGrid cg{pr.resolution, pr.resolution + 2, 1.0 / (pr.resolution + 1)};
  const std::size_t total = static_cast<std::size_t>(cg.g) * static_cast<std::size_t>(cg.g);
  const double h = cg.h;

  HarmonicApproxRun run;
  run.resolution = pr.resolution;
  run.mu = pr.mu;
  run.rho = pr.rho;

  // perturbation samples, bounds, and psi = (1/2) log det g_ij = -(1/2) log det g^ij
  std::vector<Eigen::Matrix2d> R(total);
  std::vector<double> psi(total);
  for (int j = 0; j < cg.g; ++j)
    for (int i = 0; i < cg.g; ++i) {
      const Eigen::Matrix2d r = pr.perturbation(cg.coord(i), cg.coord(j));
      if (!r.allFinite() || std::abs(r(0, 1) - r(1, 0)) > 1e-12 * (1.0 + r.norm()))
        throw DomainError("perturbation must be finite and symmetric");
      const double det = (Eigen::Matrix2d::Identity() + r).determinant();
      if (!(det > 0)) throw DomainError("perturbed inverse metric is not positive definite");
      R[cg.id(i, j)] = r;
      psi[cg.id(i, j)] = -0.5 * std::log(det);
    }
  std::array<double, 3> maxd{};
  for (int j = 0; j < cg.g; ++j)
    for (int i = 0; i < cg.g; ++i) {
      maxd[0] = std::max(maxd[0], R[cg.id(i, j)].norm());
      if (i == 0 || j == 0 || i + 1 == cg.g || j + 1 == cg.g) continue;
      const Eigen::Matrix2d rx = (R[cg.id(i + 1, j)] - R[cg.id(i - 1, j)]) / (2 * h);
      const Eigen::Matrix2d ry = (R[cg.id(i, j + 1)] - R[cg.id(i, j - 1)]) / (2 * h);
      maxd[1] = std::max(maxd[1], std::sqrt(rx.squaredNorm() + ry.squaredNorm()));
      const Eigen::Matrix2d rxx = (R[cg.id(i + 1, j)] - 2 * R[cg.id(i, j)] + R[cg.id(i - 1, j)]) / (h * h);
      const Eigen::Matrix2d ryy = (R[cg.id(i, j + 1)] - 2 * R[cg.id(i, j)] + R[cg.id(i, j - 1)]) / (h * h);
      const Eigen::Matrix2d rxy = (R[cg.id(i + 1, j + 1)] - R[cg.id(i - 1, j + 1)] - R[cg.id(i + 1, j - 1)] +
                                   R[cg.id(i - 1, j - 1)]) / (4 * h * h);
      maxd[2] = std::max(maxd[2], std::sqrt(rxx.squaredNorm() + ryy.squaredNorm() + 2 * rxy.squaredNorm()));
    }
  for (int k = 0; k < 3; ++k) {
    const double scale = pr.mu * std::pow(pr.rho, 2 - k);
    if (scale > 0) {
      run.bound_ratios[static_cast<std::size_t>(k)] = maxd[static_cast<std::size_t>(k)] / scale;
    } else if (maxd[static_cast<std::size_t>(k)] > 1e-14) {
      throw DomainError("nonzero perturbation with mu = 0");
    }
    if (run.bound_ratios[static_cast<std::size_t>(k)] > pr.bound_constant * (1 + 1e-9))
      throw DomainError("perturbation violates ||grad^" + std::to_string(k) + " R|| <= C mu rho^" +
                        std::to_string(2 - k));
  }

  // flat Dirichlet Laplacian on interior nodes, factored once
  const int n = cg.n;
  auto iid = [n](int i, int j) { return (j - 1) * n + (i - 1); };
  std::vector<Eigen::Triplet<double>> trip;
  for (int j = 1; j <= n; ++j)
    for (int i = 1; i <= n; ++i) {
      trip.emplace_back(iid(i, j), iid(i, j), 4.0 / (h * h));
      if (i > 1) trip.emplace_back(iid(i, j), iid(i - 1, j), -1.0 / (h * h));
      if (i < n) trip.emplace_back(iid(i, j), iid(i + 1, j), -1.0 / (h * h));
      if (j > 1) trip.emplace_back(iid(i, j), iid(i, j - 1), -1.0 / (h * h));
      if (j < n) trip.emplace_back(iid(i, j), iid(i, j + 1), -1.0 / (h * h));
    }
  Eigen::SparseMatrix<double> A(n * n, n * n);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
  if (solver.info() != Eigen::Success) throw SolverError("flat Laplacian factorization failed", {});

  // Q(F) = R^{ij} d_ij F + g^{ij} d_i psi d_j F at interior nodes
  auto apply_q = [&](const std::vector<double>& f) {
    Eigen::VectorXd q(n * n);
    for (int j = 1; j <= n; ++j)
      for (int i = 1; i <= n; ++i) {
        const auto c = cg.id(i, j);
        const double fxx = (f[cg.id(i + 1, j)] - 2 * f[c] + f[cg.id(i - 1, j)]) / (h * h);
        const double fyy = (f[cg.id(i, j + 1)] - 2 * f[c] + f[cg.id(i, j - 1)]) / (h * h);
        const double fxy = (f[cg.id(i + 1, j + 1)] - f[cg.id(i - 1, j + 1)] - f[cg.id(i + 1, j - 1)] +
                            f[cg.id(i - 1, j - 1)]) / (4 * h * h);
        const Eigen::Vector2d df((f[cg.id(i + 1, j)] - f[cg.id(i - 1, j)]) / (2 * h),
                                 (f[cg.id(i, j + 1)] - f[cg.id(i, j - 1)]) / (2 * h));
        const Eigen::Vector2d dpsi((psi[cg.id(i + 1, j)] - psi[cg.id(i - 1, j)]) / (2 * h),
                                   (psi[cg.id(i, j + 1)] - psi[cg.id(i, j - 1)]) / (2 * h));
        const Eigen::Matrix2d& r = R[c];
        const Eigen::Matrix2d ginv = Eigen::Matrix2d::Identity() + r;
        q[iid(i, j)] = r(0, 0) * fxx + 2 * r(0, 1) * fxy + r(1, 1) * fyy + dpsi.dot(ginv * df);
      }
    return q;
  };
  // Delta_0 F = rhs in the interior, F = b on the boundary
  auto poisson = [&](const Eigen::VectorXd& rhs, const std::vector<double>& b) {
    Eigen::VectorXd load = -rhs;
    for (int j = 1; j <= n; ++j)
      for (int i = 1; i <= n; ++i) {
        double s = 0.0;
        if (i == 1) s += b[cg.id(0, j)];
        if (i == n) s += b[cg.id(n + 1, j)];
        if (j == 1) s += b[cg.id(i, 0)];
        if (j == n) s += b[cg.id(i, n + 1)];
        load[iid(i, j)] += s / (h * h);
      }
    const Eigen::VectorXd x = solver.solve(load);
    if (solver.info() != Eigen::Success) throw SolverError("flat Poisson solve failed", {});
    std::vector<double> f = b;
    for (int j = 1; j <= n; ++j)
      for (int i = 1; i <= n; ++i) f[cg.id(i, j)] = x[iid(i, j)];
    return f;
  };

  std::vector<double> boundary(total, 0.0);
  for (int j = 0; j < cg.g; ++j)
    for (int i = 0; i < cg.g; ++i)
      if (i == 0 || j == 0 || i + 1 == cg.g || j + 1 == cg.g) boundary[cg.id(i, j)] = pr.boundary(cg.coord(i), cg.coord(j));
  const std::vector<double> zero(total, 0.0);

  std::vector<double> f = poisson(Eigen::VectorXd::Zero(n * n), boundary);
  const double base = h1_norm(cg, f);
  const double stop = pr.tolerance * std::max(base, 1e-300);
  for (int it = 1; it <= pr.iterations; ++it) {
    std::vector<double> next = poisson(-apply_q(f), boundary);
    std::vector<double> diff(total);
    for (std::size_t k = 0; k < total; ++k) diff[k] = next[k] - f[k];
    const double r = h1_norm(cg, diff);
    if (!std::isfinite(r)) throw SolverError("harmonic approximation produced non-finite iterates", {});
    run.residuals.push_back(r);
    f = std::move(next);
    const auto& rs = run.residuals;
    const std::size_t m = rs.size();
    if (r <= stop) {
      run.converged = true;
      break;
    }
    if (m >= 3 && rs[m - 1] > rs[m - 2] && rs[m - 2] > rs[m - 3]) {
      run.diverged = true;
      break;
    }
  }
  run.first_correction = run.residuals.empty() ? 0.0 : run.residuals.front();

  double logsum = 0.0;
  int ratios = 0;
  for (std::size_t k = 1; k < run.residuals.size(); ++k) {
    if (run.residuals[k] <= 1e2 * stop || run.residuals[k - 1] <= 0) break;
    logsum += std::log(run.residuals[k] / run.residuals[k - 1]);
    ++ratios;
  }
  run.decay_rate = ratios ? std::exp(logsum / ratios) : 0.0;

  // power iteration on the update map d -> Delta_0^{-1}(-Q(d)) with zero boundary data
  {
    std::vector<double> d(total, 0.0);
    for (int j = 1; j <= n; ++j)
      for (int i = 1; i <= n; ++i) {
        const double x = cg.coord(i), y = cg.coord(j);
        d[cg.id(i, j)] = std::sin(kPi * x) * std::sin(kPi * y) + 0.3 * std::sin(2 * kPi * x) * std::sin(3 * kPi * y);
      }
    double est = 0.0;
    for (int k = 0; k < 60; ++k) {
      const double before = h1_norm(cg, d);
      std::vector<double> nd = poisson(-apply_q(d), zero);
      const double after = h1_norm(cg, nd);
      if (!(after > 0)) {
        est = 0.0;
        break;
      }
      est = after / before;
      for (auto& v : nd) v /= after;
      d = std::move(nd);
    }
    run.contraction_estimate = est;
  }

  // full-equation residual of the final iterate: Delta_0 F + Q(F), lifted by Delta_0^{-1}
  {
    Eigen::VectorXd lf = apply_q(f);
    for (int j = 1; j <= n; ++j)
      for (int i = 1; i <= n; ++i)
        lf[iid(i, j)] += (f[cg.id(i + 1, j)] + f[cg.id(i - 1, j)] + f[cg.id(i, j + 1)] + f[cg.id(i, j - 1)] -
                          4 * f[cg.id(i, j)]) / (h * h);
    run.curved_residual = h1_norm(cg, poisson(lf, zero));
  }
  run.solution = std::move(f);
  return run;
}

// ---------------------------------------------------------------------------
// Phase-amplitude

namespace {

std::vector<double> derivative(const std::vector<double>& s, const std::vector<double>& u) {
  const std::size_t n = s.size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == n ? n - 1 : i + 1;
    d[i] = (u[b] - u[a]) / (s[b] - s[a]);
  }
  return d;
}

/// Unwrapped phase atan2(u, u'/k) / k.
std::vector<double> unwrapped_phase(const RaySamples& r, const std::vector<double>& du, double k) {
  std::vector<double> phi(r.s.size());
  double prev = 0.0, offset = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const double t = std::atan2(r.u[i], du[i] / k);
    if (i > 0) {
      double step = t - prev;
      offset -= 2 * kPi * std::round(step / (2 * kPi));
    }
    prev = t;
    phi[i] = (t + offset) / k;
  }
  return phi;
}

void check_ray(const RaySamples& r, double k) {
  const std::size_t n = r.s.size();
  if (n < 3 || r.u.size() != n || (!r.du.empty() && r.du.size() != n))
    throw DomainError("ray needs >= 3 samples with matching u and du");
  const double limit = 2 * kPi / k / 16;
  for (std::size_t i = 1; i < n; ++i) {
    const double ds = r.s[i] - r.s[i - 1];
    if (!(ds > 0)) throw DomainError("ray arclength must increase strictly");
    if (ds > limit * (1 + 1e-9)) throw DomainError("ray step exceeds a sixteenth of the wavelength");
  }
}

}  // namespace

PhaseAmplitude phase_amplitude_extract(const RaySamples& ray, double lambda, std::span<const RaySamples> neighbors,
                                       std::span<const double> offsets, double reference_norm) {
  if (!(lambda > 0)) throw DomainError("phase extraction needs lambda > 0");
  const double k = std::sqrt(lambda);
  check_ray(ray, k);
  const std::size_t n = ray.s.size();
  if (!neighbors.empty() && (neighbors.size() != 2 || offsets.size() != n))
    throw DomainError("angular term needs two neighbor rays and one offset per sample");

  PhaseAmplitude pa;
  pa.ray = ray;
  pa.beta1 = k;
  const std::vector<double> du = ray.du.empty() ? derivative(ray.s, ray.u) : ray.du;
  double umax = 0.0, amax = 0.0;
  std::vector<double> amp(n);
  pa.log_amplitude.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ray.u[i] * ray.u[i] + (du[i] / k) * (du[i] / k);
    amp[i] = std::sqrt(e);
    pa.log_amplitude[i] = 0.5 * std::log(e);
    umax = std::max(umax, std::abs(ray.u[i]));
    amax = std::max(amax, amp[i]);
  }
  const double ref = reference_norm > 0 ? reference_norm : umax;
  if (!(ref > 0) || amax <= 1e-12 * ref) throw DomainError("amplitude vanishes along the whole ray");

  pa.phase = unwrapped_phase(ray, du, k);
  pa.phase_slope = derivative(ray.s, pa.phase);

  std::vector<std::vector<double>> side;
  for (const auto& nb : neighbors) {
    check_ray(nb, k);
    if (nb.s.size() != n) throw DomainError("neighbor rays must match the sample count");
    const std::vector<double> ndu = nb.du.empty() ? derivative(nb.s, nb.u) : nb.du;
    std::vector<double> phi = unwrapped_phase(nb, ndu, k);
    const double period = 2 * kPi / k;
    const double shift = period * std::round((pa.phase[n / 2] - phi[n / 2]) / period);
    for (auto& v : phi) v += shift;
    side.push_back(std::move(phi));
  }

  for (std::size_t i = 1; i < n; ++i)
    if (pa.phase[i] < pa.phase[i - 1] - 1e-12) pa.phase_monotone = false;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (amp[i] <= 1e-6 * amax) continue;
    ++pa.interior_samples;
    double ang = 0.0;
    if (!side.empty()) ang = (side[1][i] - side[0][i]) / offsets[i];
    const double slope = pa.phase_slope[i];
    pa.eikonal_defect = std::max(pa.eikonal_defect, std::abs(slope * slope + ang * ang - 1.0));
    pa.max_slope_error = std::max(pa.max_slope_error, std::abs(slope - 1.0));
    pa.max_log_amplitude = std::max(pa.max_log_amplitude, std::abs(pa.log_amplitude[i]));
    const double rec = std::exp(pa.log_amplitude[i]) * std::sin(k * pa.phase[i]);
    pa.reconstruction_error = std::max(pa.reconstruction_error, std::abs(rec - ray.u[i]) / umax);
  }
  return pa;
}

RaySamples sample_ray(const EigenPair& pair, const Vec3& start, const Vec3& direction, double length, int count) {
  const Surface& s = *pair.surface;
  if (count < 3 || !(length > 0)) throw DomainError("ray needs count >= 3 and positive length");
  RaySamples r;
  r.s.resize(static_cast<std::size_t>(count));
  r.u.resize(static_cast<std::size_t>(count));
  r.du.resize(static_cast<std::size_t>(count));
  const double step = length / (count - 1);
  Vec3 a = start, t = direction;
  if (s.kind() == SurfaceKind::unit_sphere) {
    a.normalize();
    t -= t.dot(a) * a;
  } else if (s.kind() == SurfaceKind::flat_torus) {
    t.z() = 0.0;
  } else {
    throw DomainError("rays are defined on the sphere and the flat torus");
  }
  if (!(t.norm() > 0)) throw DomainError("ray direction must be tangent and nonzero");
  t.normalize();
  for (int i = 0; i < count; ++i) {
    const double si = i * step;
    Vec3 p, tan;
    if (s.kind() == SurfaceKind::unit_sphere) {
      p = std::cos(si) * a + std::sin(si) * t;
      tan = -std::sin(si) * a + std::cos(si) * t;
    } else {
      p = s.wrap(a + si * t);
      tan = t;
    }
    const auto k = static_cast<std::size_t>(i);
    r.s[k] = si;
    r.u[k] = pair.evaluate(p);
    r.du[k] = pair.gradient_at(p).dot(tan);
  }
  return r;
}

PhaseAmplitude phase_amplitude_extract(const EigenPair& pair, const Vec3& start, const Vec3& direction,
                                       double length, int count) {
  return phase_amplitude_extract(sample_ray(pair, start, direction, length, count), pair.lambda, {}, {},
                                 pair.max_abs());
}

}  // namespace geonodal
