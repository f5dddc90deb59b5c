#include "geonodal/pipeline.hpp"

#include "geonodal/errors.hpp"
#include "geonodal/estimates.hpp"
#include "geonodal/inequalities.hpp"
#include "geonodal/mesh_io.hpp"
#include "geonodal/nodal.hpp"
#include "geonodal/pixelize.hpp"
#include "geonodal/spectral.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace geonodal {

namespace {

constexpr const char* kVersion = "geonodal 0.1.0";
constexpr double kPi = std::numbers::pi;

std::string num(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::string short_num(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", d);
  return buf;
}

std::string fixed(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", d);
  return buf;
}

struct PairData {
  std::string label;
  EigenPair pair;
  std::optional<double> reference;
  NodalSet set;
  bool has_set = false;
  PixelDecomposition dec;
  bool has_pixels = false;
  nlohmann::json json = nlohmann::json::object();
};

struct Context {
  const ExperimentConfig& cfg;
  std::set<Stage> stages;
  RunReport report;
  std::vector<PairData> pairs;

  bool has(Stage s) const { return stages.count(s) > 0; }
  void check(std::string name, bool pass, double value, double threshold, std::string detail = {}) {
    report.checks.push_back({std::move(name), pass, value, threshold, std::move(detail)});
  }
};

template <class F>
void stage_guard(Stage stage, F&& f) {
  try {
    f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(to_string(stage), e.what());
  }
}

std::set<Stage> closure(Stage s, const ExperimentConfig& cfg) {
  switch (s) {
    case Stage::spectrum: return {Stage::spectrum};
    case Stage::nodal: return {Stage::spectrum, Stage::nodal};
    case Stage::pixels: return {Stage::spectrum, Stage::nodal, Stage::pixels};
    case Stage::dong: return {Stage::spectrum, Stage::nodal, Stage::pixels, Stage::dong};
    case Stage::scaling: return {Stage::spectrum, Stage::nodal, Stage::scaling};
    case Stage::harnack: return {Stage::spectrum, Stage::nodal, Stage::pixels, Stage::harnack};
    case Stage::hardy: return {Stage::hardy};
    case Stage::loja: return {Stage::loja};
    case Stage::harmapprox: return {Stage::harmapprox};
    case Stage::phase: return {Stage::spectrum, Stage::phase};
    case Stage::run: {
      std::set<Stage> all{Stage::spectrum, Stage::nodal, Stage::pixels, Stage::dong, Stage::scaling, Stage::harnack};
      if (cfg.hardy.enabled) all.insert(Stage::hardy);
      if (cfg.loja.enabled) all.insert(Stage::loja);
      if (cfg.harmapprox.enabled) all.insert(Stage::harmapprox);
      if (cfg.phase.enabled) all.insert(Stage::phase);
      return all;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// SVG

struct SvgFrame {
  double width = 0.0, height = 0.0;
  std::string body;
};

void svg_polyline(SvgFrame& f, const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 2) return;
  f.body += "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i)
    f.body += (i ? " " : "") + fixed(pts[i].first) + "," + fixed(pts[i].second);
  f.body += "\"/>\n";
}

using Piece = std::vector<std::pair<double, double>>;

/// A closed loop cut at a seam leaves its first and last pieces touching; join them.
void svg_loop(SvgFrame& f, std::vector<Piece> pieces, bool closed) {
  if (closed && pieces.size() > 1) {
    Piece& last = pieces.back();
    last.insert(last.end(), pieces.front().begin() + 1, pieces.front().end());
    pieces.front() = std::move(last);
    pieces.pop_back();
  }
  for (const auto& p : pieces) svg_polyline(f, p);
}

std::string svg_document(const SvgFrame& f, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(f.width) + "\" height=\"" +
                  fixed(f.height) + "\" viewBox=\"0 0 " + fixed(f.width) + " " + fixed(f.height) + "\">\n";
  s += "<title>" + title + "</title>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fixed(f.width) + "\" height=\"" + fixed(f.height) +
       "\" fill=\"white\" stroke=\"gray\"/>\n";
  return s + f.body + "</svg>\n";
}

/// Torus chart [0, pu) x [0, pv): polylines cut at the seams, y pointing up.
std::string torus_svg(const Surface& s, const NodalSet& set, const std::string& title) {
  const double pu = s.period_u(), pv = s.period_v();
  const double scale = 512.0 / std::max(pu, pv);
  SvgFrame f{pu * scale, pv * scale, {}};
  const double tol = 1e-9 * std::max(pu, pv);
  auto map = [&](const Vec3& p) { return std::pair<double, double>{p.x() * scale, (pv - p.y()) * scale}; };
  for (const auto& line : set.polylines) {
    if (line.points.size() < 2) continue;
    Vec3 offset = s.wrap(line.points.front()) - line.points.front();
    std::vector<Piece> pieces;
    Piece piece{map(line.points.front() + offset)};
    Vec3 prev = line.points.front() + offset;
    for (std::size_t k = 1; k < line.points.size(); ++k) {
      Vec3 p = line.points[k] + offset;
      for (int guard = 0; guard < 4; ++guard) {
        Vec3 shift = Vec3::Zero();
        double t = 1.0;
        if (p.x() > pu + tol) {
          shift.x() = pu;
          t = std::min(t, (pu - prev.x()) / (p.x() - prev.x()));
        } else if (p.x() < -tol) {
          shift.x() = -pu;
          t = std::min(t, (0.0 - prev.x()) / (p.x() - prev.x()));
        }
        if (p.y() > pv + tol) {
          const double ty = (pv - prev.y()) / (p.y() - prev.y());
          if (shift.x() == 0.0 || ty < t) {
            shift = Vec3(0, pv, 0);
            t = ty;
          }
        } else if (p.y() < -tol) {
          const double ty = (0.0 - prev.y()) / (p.y() - prev.y());
          if (shift.x() == 0.0 || ty < t) {
            shift = Vec3(0, -pv, 0);
            t = ty;
          }
        }
        if (shift.isZero()) break;
        const Vec3 cross = prev + t * (p - prev);
        piece.push_back(map(cross));
        pieces.push_back(std::move(piece));
        piece = {map(cross - shift)};
        prev = cross - shift;
        p -= shift;
        offset -= shift;
      }
      piece.push_back(map(p));
      prev = p;
    }
    pieces.push_back(std::move(piece));
    svg_loop(f, std::move(pieces), line.closed);
  }
  return svg_document(f, title);
}

/// Equirectangular longitude/latitude chart, cut where the longitude wraps.
std::string sphere_svg(const NodalSet& set, const std::string& title) {
  SvgFrame f{720.0, 360.0, {}};
  auto map = [&](const Vec3& p) {
    const Vec3 q = p.normalized();
    const double lon = std::atan2(q.y(), q.x());
    const double lat = std::asin(std::clamp(q.z(), -1.0, 1.0));
    return std::pair<double, double>{(lon + kPi) / (2 * kPi) * f.width, (kPi / 2 - lat) / kPi * f.height};
  };
  for (const auto& line : set.polylines) {
    std::vector<Piece> pieces(1);
    for (const auto& p : line.points) {
      const auto q = map(p);
      if (!pieces.back().empty() && std::abs(q.first - pieces.back().back().first) > 0.5 * f.width) pieces.emplace_back();
      pieces.back().push_back(q);
    }
    svg_loop(f, std::move(pieces), line.closed);
  }
  return svg_document(f, title);
}

// ---------------------------------------------------------------------------
// stages

void build_pairs(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& sc = cfg.surface;
  if (cfg.eigen.source == "closed_form") {
    if (sc.kind == "sphere") {
      auto sph = Surface::unit_sphere(sc.subdivision);
      for (int l : cfg.eigen.modes) {
        const ClosedFormFamily fam = SphereMode{l, cfg.eigen.sphere_m};
        ctx.pairs.push_back({describe(fam), closed_form_eigenpair(fam, sph), {}, {}, false, {}, false, {}});
      }
    } else {
      std::map<int, SurfacePtr> cache;
      for (int m : cfg.eigen.modes) {
        const int cells = sc.cells > 0 ? sc.cells : sc.cells_per_mode * std::max(1, std::max(m, cfg.eigen.torus_n));
        auto& surf = cache[cells];
        if (!surf) surf = Surface::flat_torus(sc.period_u, sc.period_v, cells, cells);
        const ClosedFormFamily fam = TorusMode{m, cfg.eigen.torus_n, TorusBranch::sine};
        ctx.pairs.push_back({describe(fam), closed_form_eigenpair(fam, surf), {}, {}, false, {}, false, {}});
      }
    }
  } else {
    SurfacePtr surf;
    if (sc.kind == "sphere") {
      surf = Surface::unit_sphere(sc.subdivision);
    } else if (sc.kind == "torus") {
      const int cells = sc.cells > 0 ? sc.cells : sc.cells_per_mode;
      surf = Surface::flat_torus(sc.period_u, sc.period_v, cells, cells);
    } else {
      surf = read_mesh(sc.mesh);
    }
    EigenSolverOptions opt;
    opt.seed = cfg.seed;
    const auto ops = assemble_laplacian(surf);
    auto pairs = solve_eigen(ops, cfg.eigen.count, cfg.eigen.shift, opt);
    for (std::size_t k = 0; k < pairs.size(); ++k)
      ctx.pairs.push_back({"fem[" + std::to_string(k) + "]", std::move(pairs[k]), {}, {}, false, {}, false, {}});
  }

  std::string csv = "index,label,lambda,closed_form_lambda,residual,relative_residual\n";
  double worst_res = 0.0, worst_fem = 0.0;
  bool sphere_fem = cfg.eigen.source == "fem" && sc.kind == "sphere";
  for (std::size_t k = 0; k < ctx.pairs.size(); ++k) {
    auto& d = ctx.pairs[k];
    const auto& p = d.pair;
    d.json["label"] = d.label;
    d.json["lambda"] = p.lambda;
    d.json["source"] = p.source == EigenSource::fem ? "fem" : "closed_form";
    d.json["relative_residual"] = p.relative_residual;
    d.json["vertices"] = p.surface->vertex_count();
    double cf = std::nan("");
    if (p.family) cf = closed_form_eigenvalue(*p.family, *p.surface);
    csv += std::to_string(k) + "," + d.label + "," + num(p.lambda) + "," + num(cf) + "," + num(p.residual) + "," +
           num(p.relative_residual) + "\n";
    if (p.source == EigenSource::fem) {
      worst_res = std::max(worst_res, p.relative_residual);
      if (sphere_fem && p.lambda > 0.5) {
        const double l = std::round(0.5 * (std::sqrt(1 + 4 * p.lambda) - 1));
        const double exact = l * (l + 1);
        const double err = std::abs(p.lambda - exact) / exact;
        d.json["fem_relative_error"] = err;
        worst_fem = std::max(worst_fem, err);
      }
    }
    if (cfg.output.fields) {
      nlohmann::json head = {{"label", d.label}, {"lambda", p.lambda}, {"vertices", p.surface->vertex_count()}};
      std::string f = "# " + head.dump() + "\nvertex,x,y,z,u\n";
      for (std::size_t v = 0; v < p.values.size(); ++v) {
        const Vec3& x = p.surface->vertices()[v];
        f += std::to_string(v) + "," + num(x.x()) + "," + num(x.y()) + "," + num(x.z()) + "," + num(p.values[v]) + "\n";
      }
      ctx.report.artifacts["eigenpair_" + std::to_string(k) + ".csv"] = f;
    }
  }
  ctx.report.artifacts["spectrum.csv"] = csv;
  if (cfg.eigen.source == "fem") {
    const double t = cfg.check.residual_max;
    if (t > 0) ctx.check("fem_residual", worst_res <= t, worst_res, t);
    const double ft = cfg.check.fem_tolerance;
    if (sphere_fem && ft > 0) ctx.check("fem_eigenvalues", worst_fem <= ft, worst_fem, ft);
  }
}

bool nodal_eligible(const PairData& d) { return d.pair.lambda > 1e-9; }

void nodal_stage(Context& ctx) {
  std::string csv = "index,label,lambda,length,reference,relative_error,polylines,domains\n";
  double worst = 0.0;
  bool any_ref = false;
  for (std::size_t k = 0; k < ctx.pairs.size(); ++k) {
    auto& d = ctx.pairs[k];
    if (!nodal_eligible(d)) {
      d.json["nodal"] = {{"skipped", "constant eigenfunction"}};
      continue;
    }
    d.set = extract_nodal_set(d.pair);
    d.has_set = true;
    d.reference = reference_nodal_length(d.pair);
    const double len = nodal_length(d.set);
    const auto domains = nodal_domains(d.pair, 0.0);
    double err = std::nan("");
    if (d.reference) {
      err = std::abs(len - *d.reference) / *d.reference;
      worst = std::max(worst, err);
      any_ref = true;
    }
    d.json["nodal"] = {{"length", len},
                       {"reference", d.reference ? nlohmann::json(*d.reference) : nlohmann::json(nullptr)},
                       {"relative_error", d.reference ? nlohmann::json(err) : nlohmann::json(nullptr)},
                       {"polylines", d.set.polylines.size()},
                       {"domains", domains.count}};
    csv += std::to_string(k) + "," + d.label + "," + num(d.pair.lambda) + "," + num(len) + "," +
           num(d.reference.value_or(std::nan(""))) + "," + num(err) + "," + std::to_string(d.set.polylines.size()) +
           "," + std::to_string(domains.count) + "\n";
    const auto kind = d.pair.surface->kind();
    const std::string name = "nodal_" + std::to_string(k) + ".svg";
    if (kind == SurfaceKind::flat_torus) ctx.report.artifacts[name] = torus_svg(*d.pair.surface, d.set, d.label);
    if (kind == SurfaceKind::unit_sphere) ctx.report.artifacts[name] = sphere_svg(d.set, d.label);
  }
  ctx.report.artifacts["nodal.csv"] = csv;
  const double t = ctx.cfg.check.length_tolerance;
  if (any_ref && t > 0) ctx.check("nodal_length", worst <= t, worst, t, "max relative error against closed form");
}

void pixel_stage(Context& ctx) {
  for (std::size_t k = 0; k < ctx.pairs.size(); ++k) {
    auto& d = ctx.pairs[k];
    if (!d.has_set || d.set.segments.empty()) continue;
    const double spacing = ctx.cfg.pixels.spacing / std::sqrt(d.pair.lambda);
    const auto cluster = select_centers(d.set, spacing);
    d.dec = build_pixels(d.pair.surface, cluster, RadiusRule::fixed(ctx.cfg.pixels.radius_factor * spacing));
    d.has_pixels = true;
    int with_center = 0;
    for (const auto& p : d.dec.pixels) with_center += p.contains_center ? 1 : 0;
    d.json["pixels"] = {{"spacing", spacing},
                        {"centers", cluster.centers.size()},
                        {"pixels", d.dec.pixels.size()},
                        {"pixels_with_center", with_center},
                        {"fronts", d.dec.fronts.size()},
                        {"uncovered_area", d.dec.uncovered_area},
                        {"max_signature", d.dec.max_signature},
                        {"oversized_signatures", d.dec.oversized_signatures}};
    nlohmann::json pj;
    pj["label"] = d.label;
    pj["spacing"] = spacing;
    pj["radius"] = ctx.cfg.pixels.radius_factor * spacing;
    pj["centers"] = nlohmann::json::array();
    for (const auto& c : cluster.centers) pj["centers"].push_back({c.x(), c.y(), c.z()});
    pj["pixels"] = nlohmann::json::array();
    for (const auto& p : d.dec.pixels) {
      nlohmann::json fr = nlohmann::json::array();
      for (int f : p.fronts) {
        const auto& front = d.dec.fronts[static_cast<std::size_t>(f)];
        fr.push_back({{"ball", front.ball},
                      {"length", front.arc.length()},
                      {"tension", front.tension},
                      {"undersampled", front.undersampled}});
      }
      pj["pixels"].push_back({{"signature", p.signature},
                              {"area", p.area},
                              {"triangles", p.triangles.size()},
                              {"curvature_ratio", p.curvature_ratio},
                              {"contains_center", p.contains_center},
                              {"fronts", fr}});
    }
    pj["uncovered_area"] = d.dec.uncovered_area;
    ctx.report.artifacts["pixels_" + std::to_string(k) + ".json"] = pj.dump(1) + "\n";
  }
}

void dong_stage(Context& ctx) {
  const double eps = ctx.cfg.estimates.dong_eps_rel;
  std::string csv = "pair,pixel,area,integral,volume,boundary,total,extracted,ratio,integral_half_eps\n";
  int failing = 0, total = 0;
  double min_ratio = std::numeric_limits<double>::infinity(), worst_change = 0.0;
  for (std::size_t k = 0; k < ctx.pairs.size(); ++k) {
    auto& d = ctx.pairs[k];
    if (!d.has_pixels) continue;
    const DongEvaluator ev(d.pair, eps), half(d.pair, 0.5 * eps);
    int pf = 0;
    double pmin = std::numeric_limits<double>::infinity(), pchange = 0.0;
    for (std::size_t p = 0; p < d.dec.pixels.size(); ++p) {
      const Region region = d.dec.region(static_cast<int>(p));
      const auto b = ev.evaluate(region, d.set, static_cast<int>(p));
      const auto bh = half.evaluate(region, d.set, static_cast<int>(p));
      const double change = b.integral_term > 0 ? std::abs(bh.integral_term - b.integral_term) / b.integral_term : 0.0;
      pchange = std::max(pchange, change);
      if (!b.dominates()) ++pf;
      if (b.extracted_length > 0) pmin = std::min(pmin, b.ratio());
      csv += std::to_string(k) + "," + std::to_string(p) + "," + num(b.area) + "," + num(b.integral_term) + "," +
             num(b.volume_term) + "," + num(b.boundary_term) + "," + num(b.total) + "," + num(b.extracted_length) +
             "," + num(b.ratio()) + "," + num(bh.integral_term) + "\n";
    }
    d.json["dong"] = {{"pixels", d.dec.pixels.size()},
                      {"failing", pf},
                      {"min_ratio", std::isfinite(pmin) ? nlohmann::json(pmin) : nlohmann::json(nullptr)},
                      {"max_integral_change", pchange}};
    failing += pf;
    total += static_cast<int>(d.dec.pixels.size());
    min_ratio = std::min(min_ratio, pmin);
    worst_change = std::max(worst_change, pchange);
  }
  ctx.report.artifacts["dong.csv"] = csv;
  if (total > 0) {
    ctx.check("dong_dominance", failing == 0, std::isfinite(min_ratio) ? min_ratio : 0.0, 1.0,
              std::to_string(failing) + " of " + std::to_string(total) + " pixels below the extracted length");
    const double t = ctx.cfg.check.dong_stability;
    if (t > 0) ctx.check("dong_stability", worst_change <= t, worst_change, t, "integral term under eps_rel / 2");
  }
}

void scaling_stage(Context& ctx) {
  std::vector<std::pair<double, double>> samples;
  for (const auto& d : ctx.pairs)
    if (d.has_set) {
      const double len = nodal_length(d.set);
      if (len > 0) samples.emplace_back(d.pair.lambda, len);
    }
  std::string csv = "lambda,length\n";
  for (const auto& [l, L] : samples) csv += num(l) + "," + num(L) + "\n";
  ctx.report.artifacts["scaling.csv"] = csv;
  if (samples.size() < 2) {
    ctx.report.summary["scaling"] = {{"skipped", "fewer than two eigenpairs"}};
    return;
  }
  const auto fit = scaling_fit(samples);
  ctx.report.summary["scaling"] = {
      {"slope", fit.slope}, {"intercept", fit.intercept}, {"residual", fit.residual}, {"samples", samples.size()}};
  const double t = ctx.cfg.check.slope_tolerance;
  if (t > 0) ctx.check("scaling_slope", std::abs(fit.slope - 0.5) <= t, fit.slope, t, "|slope - 0.5|");
}

void harnack_stage(Context& ctx) {
  const auto& est = ctx.cfg.estimates;
  const auto rule =
      est.density_rule == "meeting_nodal_set" ? DensityPixels::meeting_nodal_set : DensityPixels::containing_center;
  std::string hcsv = "pair,pixel,epsilon,component,vertices,c20,grad_sup,grad_inf,hess_sup,hess_inf,log_gradient_ratio\n";
  std::string bcsv = "pair,label,lambda,grad_ratio,hess_ratio,grad_ratio_power,hess_ratio_power,density_min,"
                     "density_median,density_max,density_pixels\n";
  double max_c20 = 0.0;
  std::vector<double> grad_ratios, densities;
  for (std::size_t k = 0; k < ctx.pairs.size(); ++k) {
    auto& d = ctx.pairs[k];
    if (!d.has_pixels) continue;
    const double umax = d.pair.max_abs();
    std::vector<double> grid;
    for (double e : est.harnack_eps) grid.push_back(e * umax);
    const auto rep = harnack_ratios(d.pair, d.dec, grid);
    double pc20 = 0.0;
    for (const auto& r : rep.records) {
      if (r.empty) continue;
      pc20 = std::max(pc20, r.c20);
      hcsv += std::to_string(k) + "," + std::to_string(r.pixel) + "," + num(r.epsilon) + "," +
              std::to_string(r.component) + "," + std::to_string(r.vertex_count) + "," + num(r.c20) + "," +
              num(r.grad_sup) + "," + num(r.grad_inf) + "," + num(r.hess_sup) + "," + num(r.hess_inf) + "," +
              num(r.log_gradient_ratio) + "\n";
    }
    max_c20 = std::max(max_c20, pc20);
    Region all;
    all.triangles.resize(d.pair.surface->triangle_count());
    for (std::size_t t = 0; t < all.triangles.size(); ++t) all.triangles[t] = static_cast<int>(t);
    const auto b = bernstein_ratios(d.pair, all, est.bernstein_eps * umax);
    grad_ratios.push_back(b.grad_ratio);
    const auto dens = lower_bound_density(d.pair, d.dec, d.set, rule);
    if (!dens.values.empty()) densities.push_back(dens.min);
    d.json["harnack"] = {{"max_c20", pc20}, {"records", rep.records.size()}, {"empty_records", rep.empty_records}};
    d.json["bernstein"] = {{"grad_ratio", b.grad_ratio},
                           {"hess_ratio", b.hess_ratio},
                           {"grad_ratio_power", b.grad_ratio_power},
                           {"hess_ratio_power", b.hess_ratio_power}};
    d.json["density"] = {{"rule", est.density_rule}, {"min", dens.min}, {"median", dens.median},
                         {"max", dens.max},          {"pixels", dens.values.size()}, {"excluded", dens.excluded}};
    bcsv += std::to_string(k) + "," + d.label + "," + num(d.pair.lambda) + "," + num(b.grad_ratio) + "," +
            num(b.hess_ratio) + "," + num(b.grad_ratio_power) + "," + num(b.hess_ratio_power) + "," + num(dens.min) +
            "," + num(dens.median) + "," + num(dens.max) + "," + std::to_string(dens.values.size()) + "\n";
  }
  ctx.report.artifacts["harnack.csv"] = hcsv;
  ctx.report.artifacts["bernstein.csv"] = bcsv;
  const auto& ck = ctx.cfg.check;
  if (max_c20 > 0 && ck.c20_max > 0) ctx.check("harnack_c20", max_c20 <= ck.c20_max, max_c20, ck.c20_max);
  if (grad_ratios.size() >= 2 && ck.bernstein_spread > 0) {
    const auto [lo, hi] = std::minmax_element(grad_ratios.begin(), grad_ratios.end());
    const double spread = *hi / *lo;
    ctx.check("bernstein_spread", spread <= ck.bernstein_spread, spread, ck.bernstein_spread);
  }
  if (densities.size() >= 2 && ck.density_band > 0) {
    const auto [lo, hi] = std::minmax_element(densities.begin(), densities.end());
    const double band = *lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity();
    ctx.check("density_band", band <= ck.density_band, std::isfinite(band) ? band : -1.0, ck.density_band,
              "max/min of per-eigenpair minimum density");
  }
}

Polynomial load_polynomial(const std::string& spec) {
  if (!spec.empty() && spec.front() == '{') return Polynomial::from_json(nlohmann::json::parse(spec));
  std::ifstream in(spec);
  if (!in) throw ConfigError("cannot read polynomial file " + spec);
  return Polynomial::from_json(nlohmann::json::parse(in));
}

void hardy_stage(Context& ctx) {
  const auto& h = ctx.cfg.hardy;
  const Polynomial p = load_polynomial(h.polynomial);
  const auto id = parse_hardy_inequality(h.inequality);
  HardyOptions o;
  o.lower = h.lower;
  o.upper = h.upper;
  std::string csv = "inequality,resolution,delta,c,normalized,sigma,active_nodes,iterations,converged,divergent\n";
  auto row = [&](const HardyEstimate& e) {
    csv += to_string(e.id) + "," + std::to_string(e.resolution) + "," + num(e.delta) + "," + num(e.c) + "," +
           num(e.normalized) + "," + num(e.sigma) + "," + std::to_string(e.active_nodes) + "," +
           std::to_string(e.iterations) + "," + (e.converged ? "1" : "0") + "," + (e.divergent ? "1" : "0") + "\n";
  };
  nlohmann::json j;
  j["polynomial"] = p.to_json();
  j["inequality"] = h.inequality;
  const auto& ck = ctx.cfg.check;
  if (id != HardyInequality::log2d) {
    const auto ref = hardy_refinement(p, id, h.resolutions, o);
    j["estimates"] = nlohmann::json::array();
    for (const auto& e : ref.estimates) {
      row(e);
      j["estimates"].push_back({{"resolution", e.resolution}, {"c", e.c}, {"converged", e.converged}});
    }
    j["monotone"] = ref.monotone;
    ctx.check("hardy_monotone", ref.monotone, ref.estimates.back().c, 0.0, "nondecreasing under refinement");
    if (ck.hardy_upper > ck.hardy_lower) {
      const double c = ref.estimates.back().c;
      ctx.check("hardy_range", c >= ck.hardy_lower && c <= ck.hardy_upper, c, ck.hardy_upper,
                "finest estimate in [" + short_num(ck.hardy_lower) + ", " + short_num(ck.hardy_upper) + "]");
    }
  }
  if (p.dimension() == 2 && !h.deltas.empty()) {
    o.resolution = h.log_resolution;
    const auto es = hardy2d_log_constant(p, h.deltas, o);
    j["log2d"] = nlohmann::json::array();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& e : es) {
      row(e);
      j["log2d"].push_back({{"delta", e.delta}, {"c", e.c}, {"normalized", e.normalized}, {"divergent", e.divergent}});
      if (e.divergent) continue;
      lo = std::min(lo, e.normalized);
      hi = std::max(hi, e.normalized);
    }
    if (ck.log_spread > 0 && hi > 0) {
      const double spread = hi / lo - 1.0;
      j["log2d_spread"] = spread;
      ctx.check("hardy_log_spread", spread <= ck.log_spread, spread, ck.log_spread, "max/min - 1 of c |log delta|");
    }
  }
  ctx.report.artifacts["hardy.csv"] = csv;
  ctx.report.summary["hardy"] = j;
}

void loja_stage(Context& ctx) {
  const auto& l = ctx.cfg.loja;
  std::string csv = "power,samples,ell1,c1,c1_envelope,violations,holdout_violations,ell2,c2\n";
  nlohmann::json arr = nlohmann::json::array();
  double worst = 0.0;
  int violations = 0;
  for (std::size_t k = 0; k < l.powers.size(); ++k) {
    const int m = l.powers[k];
    const auto fit = lojasiewicz_fit(Polynomial::real_power(m), l.lower, l.upper, l.count, ctx.cfg.seed + k);
    worst = std::max(worst, std::abs(fit.ell1 - 1.0 / m));
    violations += fit.violations;
    csv += std::to_string(m) + "," + std::to_string(fit.samples) + "," + num(fit.ell1) + "," + num(fit.c1) + "," +
           num(fit.c1_envelope) + "," + std::to_string(fit.violations) + "," + std::to_string(fit.holdout_violations) +
           "," + num(fit.ell2) + "," + num(fit.c2) + "\n";
    arr.push_back({{"power", m},
                   {"ell1", fit.ell1},
                   {"c1", fit.c1},
                   {"violations", fit.violations},
                   {"holdout_violations", fit.holdout_violations}});
  }
  ctx.report.artifacts["loja.csv"] = csv;
  ctx.report.summary["loja"] = arr;
  const double t = ctx.cfg.check.loja_tolerance;
  if (t > 0) ctx.check("loja_exponent", worst <= t, worst, t, "max |ell1 - 1/m|");
  ctx.check("loja_violations", violations == 0, violations, 0.0);
}

void harm_stage(Context& ctx) {
  const auto& ha = ctx.cfg.harmapprox;
  std::vector<HarmonicApproxRun> runs;
  std::string csv = "mu,iteration,residual\n";
  nlohmann::json arr = nlohmann::json::array();
  bool strict = true;
  for (double mu : ha.mu) {
    HarmonicApproxProblem pr;
    pr.resolution = ha.resolution;
    pr.boundary = [](double x, double y) { return x * x - y * y + 0.5 * x * y + x; };
    pr.perturbation = standard_perturbation(mu, ha.rho);
    pr.mu = mu;
    pr.rho = ha.rho;
    pr.bound_constant = ha.bound_constant;
    pr.iterations = ha.iterations;
    auto r = harmonic_approximation(pr);
    for (std::size_t k = 0; k < r.residuals.size(); ++k)
      csv += num(mu) + "," + std::to_string(k + 1) + "," + num(r.residuals[k]) + "\n";
    bool dec = true;
    for (std::size_t k = 1; k < r.residuals.size(); ++k) dec = dec && r.residuals[k] < r.residuals[k - 1];
    if (r.contraction_estimate <= 0.5 && !dec) strict = false;
    arr.push_back({{"mu", mu},
                   {"iterations", r.residuals.size()},
                   {"decay_rate", r.decay_rate},
                   {"contraction_estimate", r.contraction_estimate},
                   {"converged", r.converged},
                   {"diverged", r.diverged},
                   {"strictly_decreasing", dec},
                   {"first_correction", r.first_correction},
                   {"curved_residual", r.curved_residual}});
    runs.push_back(std::move(r));
  }
  ctx.report.artifacts["harmapprox.csv"] = csv;
  ctx.report.summary["harmapprox"] = arr;
  ctx.check("harm_strict_decrease", strict, strict ? 1.0 : 0.0, 1.0, "runs with contraction estimate <= 1/2");
  const double t = ctx.cfg.check.harm_rate_tolerance;
  for (std::size_t k = 1; k < runs.size() && t > 0; ++k) {
    if (std::abs(ha.mu[k] - 0.5 * ha.mu[k - 1]) > 1e-12 * ha.mu[k - 1] || runs[k].decay_rate <= 0) continue;
    const double ratio = runs[k - 1].decay_rate / runs[k].decay_rate;
    ctx.check("harm_rate_halving", std::abs(ratio / 2.0 - 1.0) <= t, ratio, 2.0,
              "decay rate ratio for mu = " + short_num(ha.mu[k - 1]) + " vs " + short_num(ha.mu[k]));
  }
}

void phase_stage(Context& ctx) {
  const auto& ph = ctx.cfg.phase;
  const Vec3 start(ph.start[0], ph.start[1], ph.start[2]), dir(ph.direction[0], ph.direction[1], ph.direction[2]);
  std::string csv = "pair,label,lambda,max_log_amplitude,max_slope_error,eikonal_defect,reconstruction_error,"
                    "phase_monotone,interior_samples\n";
  nlohmann::json arr = nlohmann::json::array();
  double amp = 0.0, slope = 0.0, eik = 0.0;
  for (std::size_t k = 0; k < ctx.pairs.size(); ++k) {
    EigenPair pair = ctx.pairs[k].pair;
    if (!(pair.lambda > 1e-9)) continue;
    if (ph.unit_amplitude && pair.family) pair.normalization = 1.0;
    const auto pa = phase_amplitude_extract(pair, start, dir, ph.length, ph.samples);
    amp = std::max(amp, pa.max_log_amplitude);
    slope = std::max(slope, pa.max_slope_error);
    eik = std::max(eik, pa.eikonal_defect);
    csv += std::to_string(k) + "," + ctx.pairs[k].label + "," + num(pair.lambda) + "," + num(pa.max_log_amplitude) +
           "," + num(pa.max_slope_error) + "," + num(pa.eikonal_defect) + "," + num(pa.reconstruction_error) + "," +
           (pa.phase_monotone ? "1" : "0") + "," + std::to_string(pa.interior_samples) + "\n";
    arr.push_back({{"label", ctx.pairs[k].label},
                   {"max_log_amplitude", pa.max_log_amplitude},
                   {"max_slope_error", pa.max_slope_error},
                   {"eikonal_defect", pa.eikonal_defect},
                   {"reconstruction_error", pa.reconstruction_error},
                   {"phase_monotone", pa.phase_monotone}});
  }
  ctx.report.artifacts["phase.csv"] = csv;
  ctx.report.summary["phase"] = arr;
  const auto& ck = ctx.cfg.check;
  if (ck.phase_amplitude > 0) ctx.check("phase_amplitude", amp <= ck.phase_amplitude, amp, ck.phase_amplitude);
  if (ck.phase_slope > 0) ctx.check("phase_slope", slope <= ck.phase_slope, slope, ck.phase_slope);
  if (ck.eikonal_max > 0) ctx.check("eikonal_defect", eik <= ck.eikonal_max, eik, ck.eikonal_max);
}

}  // namespace

Stage parse_stage(const std::string& name) {
  static const std::map<std::string, Stage> names = {
      {"spectrum", Stage::spectrum}, {"nodal", Stage::nodal},     {"pixels", Stage::pixels},
      {"dong", Stage::dong},         {"scaling", Stage::scaling}, {"harnack", Stage::harnack},
      {"hardy", Stage::hardy},       {"loja", Stage::loja},       {"harmapprox", Stage::harmapprox},
      {"phase", Stage::phase},       {"run", Stage::run}};
  const auto it = names.find(name);
  if (it == names.end()) throw ConfigError("unknown stage '" + name + "'");
  return it->second;
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::spectrum: return "spectrum";
    case Stage::nodal: return "nodal";
    case Stage::pixels: return "pixels";
    case Stage::dong: return "dong";
    case Stage::scaling: return "scaling";
    case Stage::harnack: return "harnack";
    case Stage::hardy: return "hardy";
    case Stage::loja: return "loja";
    case Stage::harmapprox: return "harmapprox";
    case Stage::phase: return "phase";
    case Stage::run: return "run";
  }
  return "?";
}

bool RunReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

RunReport run_stage(const ExperimentConfig& config, Stage stage) {
  validate_config(config);
  Context ctx{config, closure(stage, config), {}, {}};
  auto& summary = ctx.report.summary;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(config)));
  summary["provenance"] = {{"config_hash", hash},
                           {"seed", config.seed},
                           {"version", kVersion},
                           {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                         "." + std::to_string(EIGEN_MINOR_VERSION)}};
  summary["stage"] = to_string(stage);

  if (ctx.has(Stage::spectrum)) stage_guard(Stage::spectrum, [&] { build_pairs(ctx); });
  if (ctx.has(Stage::nodal)) stage_guard(Stage::nodal, [&] { nodal_stage(ctx); });
  if (ctx.has(Stage::pixels)) stage_guard(Stage::pixels, [&] { pixel_stage(ctx); });
  if (ctx.has(Stage::dong)) stage_guard(Stage::dong, [&] { dong_stage(ctx); });
  if (ctx.has(Stage::scaling)) stage_guard(Stage::scaling, [&] { scaling_stage(ctx); });
  if (ctx.has(Stage::harnack)) stage_guard(Stage::harnack, [&] { harnack_stage(ctx); });
  if (ctx.has(Stage::hardy)) stage_guard(Stage::hardy, [&] { hardy_stage(ctx); });
  if (ctx.has(Stage::loja)) stage_guard(Stage::loja, [&] { loja_stage(ctx); });
  if (ctx.has(Stage::harmapprox)) stage_guard(Stage::harmapprox, [&] { harm_stage(ctx); });
  if (ctx.has(Stage::phase)) stage_guard(Stage::phase, [&] { phase_stage(ctx); });

  if (!ctx.pairs.empty()) {
    summary["eigenpairs"] = nlohmann::json::array();
    for (const auto& d : ctx.pairs) summary["eigenpairs"].push_back(d.json);
  }
  summary["checks"] = nlohmann::json::array();
  for (const auto& c : ctx.report.checks)
    summary["checks"].push_back(
        {{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"threshold", c.threshold}, {"detail", c.detail}});
  summary["passed"] = ctx.report.passed();
  return std::move(ctx.report);
}

std::string summary_text(const RunReport& report) { return report.summary.dump(2) + "\n"; }

std::vector<std::filesystem::path> emit(const RunReport& report, const std::filesystem::path& dir,
                                        const std::set<std::string>& formats) {
  std::vector<std::filesystem::path> written;
  if (formats.empty()) return written;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    out << content;
    if (!out) throw ConfigError("cannot write " + path.string());
    written.push_back(path);
  };
  for (const auto& [name, content] : report.artifacts) {
    const auto ext = std::filesystem::path(name).extension().string();
    if (!ext.empty() && formats.count(ext.substr(1))) write(name, content);
  }
  if (formats.count("json")) write("summary.json", summary_text(report));
  return written;
}

}  // namespace geonodal
