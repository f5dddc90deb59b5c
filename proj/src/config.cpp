#include "geonodal/config.hpp"

#include "geonodal/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace geonodal {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& v) {
  double d = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(d))
    throw ConfigError("expected a number, got '" + v + "'");
  return d;
}

long long to_integer(const std::string& v) {
  long long i = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), i);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return i;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i];
  return s;
}

struct Entry {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class M>
Entry num(std::string section, std::string key, M member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) { std::invoke(member, c) = to_double(v); },
          [member](const ExperimentConfig& c) { return fmt_double(std::invoke(member, c)); }};
}

template <class M>
Entry integer(std::string section, std::string key, M member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) {
            const long long i = to_integer(v);
            if (i < -1000000000LL || i > 1000000000LL) throw ConfigError("integer out of range: " + v);
            std::invoke(member, c) = static_cast<int>(i);
          },
          [member](const ExperimentConfig& c) { return std::to_string(std::invoke(member, c)); }};
}

template <class M>
Entry text(std::string section, std::string key, M member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) { std::invoke(member, c) = v; },
          [member](const ExperimentConfig& c) { return std::invoke(member, c); }};
}

template <class M>
Entry flag(std::string section, std::string key, M member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) { std::invoke(member, c) = to_bool(v); },
          [member](const ExperimentConfig& c) { return std::string(std::invoke(member, c) ? "true" : "false"); }};
}

template <class M>
Entry num_list(std::string section, std::string key, M member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) {
            std::vector<double> out;
            for (const auto& item : split_list(v)) out.push_back(to_double(item));
            std::invoke(member, c) = out;
          },
          [member](const ExperimentConfig& c) {
            std::vector<std::string> items;
            for (double d : std::invoke(member, c)) items.push_back(fmt_double(d));
            return join(items);
          }};
}

/// Integers and inclusive ranges: "1..8" or "2, 4, 6".
template <class M>
Entry int_list(std::string section, std::string key, M member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) {
            std::vector<int> out;
            for (const auto& item : split_list(v)) {
              const auto dots = item.find("..");
              if (dots == std::string::npos) {
                out.push_back(static_cast<int>(to_integer(item)));
                continue;
              }
              const long long a = to_integer(trim(item.substr(0, dots)));
              const long long b = to_integer(trim(item.substr(dots + 2)));
              if (b < a || b - a > 100000) throw ConfigError("bad range '" + item + "'");
              for (long long i = a; i <= b; ++i) out.push_back(static_cast<int>(i));
            }
            std::invoke(member, c) = out;
          },
          [member](const ExperimentConfig& c) {
            std::vector<std::string> items;
            for (int i : std::invoke(member, c)) items.push_back(std::to_string(i));
            return join(items);
          }};
}

template <class M>
Entry text_list(std::string section, std::string key, M member) {
  return {std::move(section), std::move(key),
          [member](ExperimentConfig& c, const std::string& v) { std::invoke(member, c) = split_list(v); },
          [member](const ExperimentConfig& c) { return join(std::invoke(member, c)); }};
}

const std::vector<Entry>& registry() {
  using C = ExperimentConfig;
  static const std::vector<Entry> entries = {
      {"run", "seed",
       [](C& c, const std::string& v) {
         const long long s = to_integer(v);
         if (s < 0) throw ConfigError("seed must be >= 0");
         c.seed = static_cast<std::uint64_t>(s);
       },
       [](const C& c) { return std::to_string(c.seed); }},
      text("surface", "kind", [](auto& c) -> auto& { return c.surface.kind; }),
      num("surface", "period_u", [](auto& c) -> auto& { return c.surface.period_u; }),
      num("surface", "period_v", [](auto& c) -> auto& { return c.surface.period_v; }),
      integer("surface", "cells", [](auto& c) -> auto& { return c.surface.cells; }),
      integer("surface", "cells_per_mode", [](auto& c) -> auto& { return c.surface.cells_per_mode; }),
      integer("surface", "subdivision", [](auto& c) -> auto& { return c.surface.subdivision; }),
      text("surface", "mesh", [](auto& c) -> auto& { return c.surface.mesh; }),
      text("eigen", "source", [](auto& c) -> auto& { return c.eigen.source; }),
      int_list("eigen", "modes", [](auto& c) -> auto& { return c.eigen.modes; }),
      integer("eigen", "torus_n", [](auto& c) -> auto& { return c.eigen.torus_n; }),
      integer("eigen", "sphere_m", [](auto& c) -> auto& { return c.eigen.sphere_m; }),
      integer("eigen", "count", [](auto& c) -> auto& { return c.eigen.count; }),
      num("eigen", "shift", [](auto& c) -> auto& { return c.eigen.shift; }),
      num("pixels", "spacing", [](auto& c) -> auto& { return c.pixels.spacing; }),
      num("pixels", "radius_factor", [](auto& c) -> auto& { return c.pixels.radius_factor; }),
      num("estimates", "dong_eps_rel", [](auto& c) -> auto& { return c.estimates.dong_eps_rel; }),
      num_list("estimates", "harnack_eps", [](auto& c) -> auto& { return c.estimates.harnack_eps; }),
      num("estimates", "bernstein_eps", [](auto& c) -> auto& { return c.estimates.bernstein_eps; }),
      text("estimates", "density_rule", [](auto& c) -> auto& { return c.estimates.density_rule; }),
      flag("hardy", "enabled", [](auto& c) -> auto& { return c.hardy.enabled; }),
      text("hardy", "polynomial", [](auto& c) -> auto& { return c.hardy.polynomial; }),
      text("hardy", "inequality", [](auto& c) -> auto& { return c.hardy.inequality; }),
      int_list("hardy", "resolutions", [](auto& c) -> auto& { return c.hardy.resolutions; }),
      num_list("hardy", "deltas", [](auto& c) -> auto& { return c.hardy.deltas; }),
      integer("hardy", "log_resolution", [](auto& c) -> auto& { return c.hardy.log_resolution; }),
      num("hardy", "lower", [](auto& c) -> auto& { return c.hardy.lower; }),
      num("hardy", "upper", [](auto& c) -> auto& { return c.hardy.upper; }),
      flag("loja", "enabled", [](auto& c) -> auto& { return c.loja.enabled; }),
      int_list("loja", "powers", [](auto& c) -> auto& { return c.loja.powers; }),
      integer("loja", "count", [](auto& c) -> auto& { return c.loja.count; }),
      num("loja", "lower", [](auto& c) -> auto& { return c.loja.lower; }),
      num("loja", "upper", [](auto& c) -> auto& { return c.loja.upper; }),
      flag("harmapprox", "enabled", [](auto& c) -> auto& { return c.harmapprox.enabled; }),
      num_list("harmapprox", "mu", [](auto& c) -> auto& { return c.harmapprox.mu; }),
      num("harmapprox", "rho", [](auto& c) -> auto& { return c.harmapprox.rho; }),
      integer("harmapprox", "resolution", [](auto& c) -> auto& { return c.harmapprox.resolution; }),
      integer("harmapprox", "iterations", [](auto& c) -> auto& { return c.harmapprox.iterations; }),
      num("harmapprox", "bound_constant", [](auto& c) -> auto& { return c.harmapprox.bound_constant; }),
      flag("phase", "enabled", [](auto& c) -> auto& { return c.phase.enabled; }),
      num_list("phase", "start", [](auto& c) -> auto& { return c.phase.start; }),
      num_list("phase", "direction", [](auto& c) -> auto& { return c.phase.direction; }),
      num("phase", "length", [](auto& c) -> auto& { return c.phase.length; }),
      integer("phase", "samples", [](auto& c) -> auto& { return c.phase.samples; }),
      flag("phase", "unit_amplitude", [](auto& c) -> auto& { return c.phase.unit_amplitude; }),
      num("check", "length_tolerance", [](auto& c) -> auto& { return c.check.length_tolerance; }),
      num("check", "slope_tolerance", [](auto& c) -> auto& { return c.check.slope_tolerance; }),
      num("check", "dong_stability", [](auto& c) -> auto& { return c.check.dong_stability; }),
      num("check", "c20_max", [](auto& c) -> auto& { return c.check.c20_max; }),
      num("check", "bernstein_spread", [](auto& c) -> auto& { return c.check.bernstein_spread; }),
      num("check", "density_band", [](auto& c) -> auto& { return c.check.density_band; }),
      num("check", "fem_tolerance", [](auto& c) -> auto& { return c.check.fem_tolerance; }),
      num("check", "residual_max", [](auto& c) -> auto& { return c.check.residual_max; }),
      num("check", "hardy_lower", [](auto& c) -> auto& { return c.check.hardy_lower; }),
      num("check", "hardy_upper", [](auto& c) -> auto& { return c.check.hardy_upper; }),
      num("check", "log_spread", [](auto& c) -> auto& { return c.check.log_spread; }),
      num("check", "loja_tolerance", [](auto& c) -> auto& { return c.check.loja_tolerance; }),
      num("check", "harm_rate_tolerance", [](auto& c) -> auto& { return c.check.harm_rate_tolerance; }),
      num("check", "phase_amplitude", [](auto& c) -> auto& { return c.check.phase_amplitude; }),
      num("check", "phase_slope", [](auto& c) -> auto& { return c.check.phase_slope; }),
      num("check", "eikonal_max", [](auto& c) -> auto& { return c.check.eikonal_max; }),
      text("output", "dir", [](auto& c) -> auto& { return c.output.dir; }),
      text_list("output", "formats", [](auto& c) -> auto& { return c.output.formats; }),
      flag("output", "fields", [](auto& c) -> auto& { return c.output.fields; }),
  };
  return entries;
}

std::string resolve(const std::string& path, const std::filesystem::path& base) {
  if (path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal().string();
}

bool inline_json(const std::string& s) { return !s.empty() && s.front() == '{'; }

}  // namespace

void validate_config(const ExperimentConfig& c, const std::filesystem::path& base) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  const auto& s = c.surface;
  require(s.kind == "torus" || s.kind == "sphere" || s.kind == "mesh", "surface.kind must be torus, sphere or mesh");
  require(s.period_u > 0 && s.period_v > 0, "surface periods must be > 0");
  require(s.cells >= 0 && s.cells <= 8192, "surface.cells must lie in [0, 8192]");
  require(s.cells_per_mode >= 4 && s.cells_per_mode <= 1024, "surface.cells_per_mode must lie in [4, 1024]");
  require(s.subdivision >= 0 && s.subdivision <= 7, "surface.subdivision must lie in [0, 7]");
  if (s.kind == "mesh") {
    require(!s.mesh.empty(), "surface.mesh is required for kind = mesh");
    require(std::filesystem::exists(resolve(s.mesh, base)), "mesh file not found: " + s.mesh);
  }
  const auto& e = c.eigen;
  require(e.source == "closed_form" || e.source == "fem", "eigen.source must be closed_form or fem");
  require(!(e.source == "closed_form" && s.kind == "mesh"), "closed-form families need a torus or sphere surface");
  if (e.source == "closed_form") {
    require(!e.modes.empty(), "eigen.modes must not be empty");
    for (int m : e.modes) require(m >= 0 && m <= 256, "eigen.modes entries must lie in [0, 256]");
    if (s.kind == "sphere")
      for (int l : e.modes) require(std::abs(e.sphere_m) <= l, "eigen.sphere_m must satisfy |m| <= l");
  }
  require(e.count >= 1 && e.count <= 500, "eigen.count must lie in [1, 500]");
  require(std::isfinite(e.shift), "eigen.shift must be finite");
  require(c.pixels.spacing > 0, "pixels.spacing must be > 0");
  require(c.pixels.radius_factor > 0, "pixels.radius_factor must be > 0");
  const auto& est = c.estimates;
  require(est.dong_eps_rel > 0 && est.dong_eps_rel <= 1e-2, "estimates.dong_eps_rel must lie in (0, 1e-2]");
  require(!est.harnack_eps.empty(), "estimates.harnack_eps must not be empty");
  for (double x : est.harnack_eps) require(x > 0, "estimates.harnack_eps entries must be > 0");
  require(est.bernstein_eps > 0, "estimates.bernstein_eps must be > 0");
  require(est.density_rule == "containing_center" || est.density_rule == "meeting_nodal_set",
          "estimates.density_rule must be containing_center or meeting_nodal_set");
  const auto& h = c.hardy;
  require(h.inequality == "gh1" || h.inequality == "gh2" || h.inequality == "gh3" || h.inequality == "log2d",
          "hardy.inequality must be gh1, gh2, gh3 or log2d");
  require(!h.resolutions.empty(), "hardy.resolutions must not be empty");
  for (int r : h.resolutions) require(r >= 2 && r <= 256, "hardy.resolutions entries must lie in [2, 256]");
  for (double d : h.deltas) require(d > 0 && d < 1, "hardy.deltas entries must lie in (0, 1)");
  require(h.log_resolution >= 2 && h.log_resolution <= 2048, "hardy.log_resolution must lie in [2, 2048]");
  require(h.upper > h.lower, "hardy box must be nonempty");
  if (h.enabled) {
    nlohmann::json j;
    try {
      if (inline_json(h.polynomial)) {
        j = nlohmann::json::parse(h.polynomial);
      } else {
        std::ifstream in(resolve(h.polynomial, base));
        if (!in) throw ConfigError("polynomial file not found: " + h.polynomial);
        j = nlohmann::json::parse(in);
      }
    } catch (const nlohmann::json::exception& err) {
      throw ConfigError(std::string("hardy.polynomial is not valid JSON: ") + err.what());
    }
    if (!j.is_object() || !j.contains("dimension") || !j.contains("coefficients"))
      throw ConfigError("hardy.polynomial needs 'dimension' and 'coefficients'");
  }
  const auto& l = c.loja;
  require(!l.powers.empty(), "loja.powers must not be empty");
  for (int m : l.powers) require(m >= 1 && m <= 32, "loja.powers entries must lie in [1, 32]");
  require(l.count >= 10000 && l.count <= 10000000, "loja.count must lie in [1e4, 1e7]");
  require(l.upper > l.lower, "loja box must be nonempty");
  const auto& ha = c.harmapprox;
  require(!ha.mu.empty(), "harmapprox.mu must not be empty");
  for (double m : ha.mu) require(m >= 0, "harmapprox.mu entries must be >= 0");
  require(ha.rho > 0, "harmapprox.rho must be > 0");
  require(ha.resolution >= 4 && ha.resolution <= 1024, "harmapprox.resolution must lie in [4, 1024]");
  require(ha.iterations >= 1 && ha.iterations <= 10000, "harmapprox.iterations must lie in [1, 1e4]");
  require(ha.bound_constant > 0, "harmapprox.bound_constant must be > 0");
  const auto& p = c.phase;
  require(p.start.size() == 3 && p.direction.size() == 3, "phase.start and phase.direction need 3 components");
  require(p.length > 0, "phase.length must be > 0");
  require(p.samples >= 3 && p.samples <= 10000000, "phase.samples must lie in [3, 1e7]");
  for (const auto& f : c.output.formats)
    require(f == "csv" || f == "json" || f == "svg", "output.formats entries must be csv, json or svg");
  require(!c.output.dir.empty(), "output.dir must not be empty");
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  std::map<std::pair<std::string, std::string>, const Entry*> lookup;
  std::set<std::string> sections;
  for (const auto& e : registry()) {
    lookup[{e.section, e.key}] = &e;
    sections.insert(e.section);
  }
  std::set<std::pair<std::string, std::string>> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!sections.count(section)) throw ConfigError(where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = lookup.find({section, key});
    if (it == lookup.end()) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert({section, key}).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      it->second->set(c, value);
    } catch (const ConfigError& err) {
      throw ConfigError(where + section + "." + key + ": " + err.what());
    }
  }
  c.surface.mesh = resolve(c.surface.mesh, base_dir);
  c.output.dir = resolve(c.output.dir, base_dir);
  if (!inline_json(c.hardy.polynomial)) c.hardy.polynomial = resolve(c.hardy.polynomial, base_dir);
  validate_config(c, base_dir);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string emit_config(const ExperimentConfig& c) {
  std::string out;
  std::string section;
  for (const auto& e : registry()) {
    if (e.section != section) {
      out += (section.empty() ? "[" : "\n[") + e.section + "]\n";
      section = e.section;
    }
    out += e.key + " = " + e.get(c) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : emit_config(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace geonodal
