#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace geonodal {

struct SurfaceSpec {
  std::string kind = "torus";  ///< torus | sphere | mesh
  double period_u = 1.0;
  double period_v = 1.0;
  int cells = 0;              ///< torus cells per axis; 0 means cells_per_mode * mode
  int cells_per_mode = 64;
  int subdivision = 5;
  std::string mesh;           ///< OFF/OBJ path (kind = mesh)

  friend bool operator==(const SurfaceSpec&, const SurfaceSpec&) = default;
};

struct EigenSpec {
  std::string source = "closed_form";  ///< closed_form | fem
  std::vector<int> modes{1, 2, 3, 4, 5, 6, 7, 8};  ///< torus m or sphere l
  int torus_n = 0;
  int sphere_m = 0;
  int count = 6;  ///< fem
  double shift = -1.0;  ///< below the spectrum; 0 is an eigenvalue on closed surfaces

  friend bool operator==(const EigenSpec&, const EigenSpec&) = default;
};

struct PixelSpec {
  double spacing = 1.0;  ///< center spacing in units of 1/sqrt(lambda)
  double radius_factor = 1.2;

  friend bool operator==(const PixelSpec&, const PixelSpec&) = default;
};

struct EstimateSpec {
  double dong_eps_rel = 1e-3;
  std::vector<double> harnack_eps{0.5};  ///< relative to max|u|
  double bernstein_eps = 0.1;            ///< relative to max|u|
  std::string density_rule = "containing_center";  ///< containing_center | meeting_nodal_set

  friend bool operator==(const EstimateSpec&, const EstimateSpec&) = default;
};

struct HardySpec {
  bool enabled = false;
  std::string polynomial = R"({"dimension":3,"coefficients":{"1,0,0":1}})";  ///< inline JSON or a file path
  std::string inequality = "gh2";
  std::vector<int> resolutions{16, 32};
  std::vector<double> deltas{1e-2, 1e-3, 1e-4};
  int log_resolution = 64;
  double lower = -1.0;
  double upper = 1.0;

  friend bool operator==(const HardySpec&, const HardySpec&) = default;
};

struct LojaSpec {
  bool enabled = false;
  std::vector<int> powers{2, 3, 4};  ///< h = Re z^m
  int count = 10000;
  double lower = -1.0;
  double upper = 1.0;

  friend bool operator==(const LojaSpec&, const LojaSpec&) = default;
};

struct HarmApproxSpec {
  bool enabled = false;
  std::vector<double> mu{0.4, 0.2};
  double rho = 1.0;
  int resolution = 64;
  int iterations = 60;
  double bound_constant = 50.0;

  friend bool operator==(const HarmApproxSpec&, const HarmApproxSpec&) = default;
};

struct PhaseSpec {
  bool enabled = false;
  std::vector<double> start{0.01, 0.3, 0.0};
  std::vector<double> direction{1.0, 0.0, 0.0};
  double length = 0.9;
  int samples = 400;
  bool unit_amplitude = true;  ///< evaluate the closed form without mass normalization

  friend bool operator==(const PhaseSpec&, const PhaseSpec&) = default;
};

/// Check-mode thresholds; a non-positive value disables the corresponding assertion.
struct CheckSpec {
  double length_tolerance = 0.01;
  double slope_tolerance = 0.02;
  double dong_stability = 0.01;
  double c20_max = 2.2;
  double bernstein_spread = 3.0;
  double density_band = 4.0;
  double fem_tolerance = 0.01;
  double residual_max = 1e-8;
  double hardy_lower = 0.0;
  double hardy_upper = 0.0;
  double log_spread = 0.2;
  double loja_tolerance = 0.02;
  double harm_rate_tolerance = 0.25;
  double phase_amplitude = 0.0;
  double phase_slope = 0.0;
  double eikonal_max = 0.0;

  friend bool operator==(const CheckSpec&, const CheckSpec&) = default;
};

struct OutputSpec {
  std::string dir = "out";
  std::vector<std::string> formats{"csv", "json", "svg"};
  bool fields = false;  ///< per-vertex eigenfunction CSVs

  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 20240601;
  SurfaceSpec surface;
  EigenSpec eigen;
  PixelSpec pixels;
  EstimateSpec estimates;
  HardySpec hardy;
  LojaSpec loja;
  HarmApproxSpec harmapprox;
  PhaseSpec phase;
  CheckSpec check;
  OutputSpec output;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parse `[section]` / `key = value` text. Relative paths resolve against `base_dir`.
/// Unknown sections or keys, malformed values and out-of-range numbers raise ConfigError.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical text: every key, fixed order, round-trip exact doubles.
std::string emit_config(const ExperimentConfig& config);
void validate_config(const ExperimentConfig& config, const std::filesystem::path& base_dir = {});

/// FNV-1a over the canonical text.
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace geonodal
