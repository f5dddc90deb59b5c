#pragma once

#include "geonodal/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace geonodal {

enum class Stage { spectrum, nodal, pixels, dong, scaling, harnack, hardy, loja, harmapprox, phase, run };

Stage parse_stage(const std::string& name);
std::string to_string(Stage stage);

/// A module error tagged with the pipeline stage that raised it.
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

private:
  std::string stage_;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct RunReport {
  nlohmann::json summary;
  std::vector<CheckResult> checks;
  /// File name -> contents (csv, json, svg), generated in memory and written by emit().
  std::map<std::string, std::string> artifacts;

  bool passed() const;
};

RunReport run_stage(const ExperimentConfig& config, Stage stage);
inline RunReport run(const ExperimentConfig& config) { return run_stage(config, Stage::run); }

/// Deterministic serialization of the summary (no timings, sorted keys).
std::string summary_text(const RunReport& report);

/// Write the artifacts whose extension is in `formats`, plus summary.json when json is requested.
/// An empty format set writes nothing.
std::vector<std::filesystem::path> emit(const RunReport& report, const std::filesystem::path& dir,
                                        const std::set<std::string>& formats);

}  // namespace geonodal
