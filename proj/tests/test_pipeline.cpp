#include "geonodal/config.hpp"
#include "geonodal/errors.hpp"
#include "geonodal/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <regex>

using namespace geonodal;

namespace {

ExperimentConfig torus(std::vector<int> modes) {
  ExperimentConfig c;
  c.eigen.modes = std::move(modes);
  return c;
}

int count(const std::string& s, const std::string& needle) {
  int n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("torus m=3 chart has six vertical lines") {
  const auto r = run_stage(torus({3}), Stage::nodal);
  const auto& svg = r.artifacts.at("nodal_0.svg");
  const std::regex poly("points=\"([^\"]*)\"");
  int vertical = 0;
  for (std::sregex_iterator it(svg.begin(), svg.end(), poly), end; it != end; ++it) {
    const std::string pts = (*it)[1];
    const std::regex xy("([-0-9.]+),([-0-9.]+)");
    double xmin = 1e9, xmax = -1e9, ymin = 1e9, ymax = -1e9;
    for (std::sregex_iterator p(pts.begin(), pts.end(), xy); p != end; ++p) {
      const double x = std::stod((*p)[1]), y = std::stod((*p)[2]);
      xmin = std::min(xmin, x), xmax = std::max(xmax, x);
      ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
    if (xmax - xmin < 1e-3 && ymax - ymin > 511.0) ++vertical;
  }
  CHECK(vertical == 6);
  CHECK(count(svg, "<polyline") == 6);
}

TEST_CASE("sphere report has an equirectangular chart") {
  ExperimentConfig c;
  c.surface.kind = "sphere";
  c.surface.subdivision = 4;
  c.eigen.modes = {2};
  const auto r = run_stage(c, Stage::nodal);
  REQUIRE(r.artifacts.count("nodal_0.svg"));
  const auto& svg = r.artifacts.at("nodal_0.svg");
  CHECK(svg.find("viewBox=\"0 0 720.0000 360.0000\"") != std::string::npos);
  CHECK(count(svg, "<polyline") >= 2);
}

TEST_CASE("empty format set writes nothing") {
  const auto r = run_stage(torus({1}), Stage::nodal);
  const auto dir = std::filesystem::temp_directory_path() / "geonodal_empty_emit";
  std::filesystem::remove_all(dir);
  CHECK(emit(r, dir, {}).empty());
  CHECK_FALSE(std::filesystem::exists(dir));
  const auto files = emit(r, dir, {"json"});
  REQUIRE(files.size() == 1);
  CHECK(files.front().filename() == "summary.json");
  std::filesystem::remove_all(dir);
}

TEST_CASE("torus scaling golden run") {
  const auto r = run_stage(torus({1, 2, 3, 4, 5, 6, 7, 8}), Stage::scaling);
  CHECK(r.passed());
  CHECK(std::abs(r.summary["scaling"]["slope"].get<double>() - 0.5) <= 0.02);
  CHECK(r.summary["provenance"]["seed"] == 20240601);
}

TEST_CASE("summary is deterministic and seed sensitive for fem") {
  ExperimentConfig c;
  c.surface.kind = "sphere";
  c.surface.subdivision = 3;
  c.eigen.source = "fem";
  c.eigen.count = 4;
  const auto a = summary_text(run_stage(c, Stage::nodal));
  const auto b = summary_text(run_stage(c, Stage::nodal));
  CHECK(a == b);
  c.seed += 1;
  CHECK(summary_text(run_stage(c, Stage::nodal)) != a);
}

TEST_CASE("stage names and errors") {
  CHECK(parse_stage("harmapprox") == Stage::harmapprox);
  CHECK(to_string(Stage::dong) == "dong");
  CHECK_THROWS_AS(parse_stage("everything"), ConfigError);
  ExperimentConfig bad;
  bad.pixels.spacing = 0.0;
  CHECK_THROWS_AS(run(bad), ConfigError);
  ExperimentConfig c;
  c.hardy.enabled = true;
  c.hardy.polynomial = R"({"dimension":3,"coefficients":{"0,0,0":1}})";
  try {
    run_stage(c, Stage::hardy);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "hardy");
  }
}
