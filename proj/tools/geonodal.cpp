#include "geonodal/config.hpp"
#include "geonodal/errors.hpp"
#include "geonodal/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <set>

namespace {

struct Options {
  std::string config;
  std::string out;
  bool check = false;
  std::optional<std::uint64_t> seed;
};

int execute(const std::string& stage_name, const Options& opt) {
  using namespace geonodal;
  ExperimentConfig cfg;
  try {
    if (!opt.config.empty()) cfg = load_config(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    if (!opt.out.empty()) cfg.output.dir = opt.out;
    validate_config(cfg);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  RunReport report;
  try {
    report = run_stage(cfg, parse_stage(stage_name));
    const std::set<std::string> formats(cfg.output.formats.begin(), cfg.output.formats.end());
    for (const auto& path : emit(report, cfg.output.dir, formats)) std::cout << "wrote " << path.string() << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  for (const auto& c : report.checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << c.value << " threshold=" << c.threshold
              << (c.detail.empty() ? "" : " (" + c.detail + ")") << "\n";
  return opt.check && !report.passed() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nodal-set experiments on surfaces"};
  app.require_subcommand(1);
  Options opt;
  std::string chosen;
  for (const char* name : {"spectrum", "nodal", "pixels", "dong", "scaling", "harnack", "hardy", "loja", "harmapprox",
                           "phase", "run"}) {
    auto* sub = app.add_subcommand(name, std::string("run the ") + name + " stage");
    sub->add_option("--config", opt.config, "experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "output directory");
    sub->add_flag("--check", opt.check, "exit 1 when an assertion fails");
    sub->add_option("--seed", opt.seed, "global seed");
    sub->callback([&chosen, name] { chosen = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return execute(chosen, opt);
}
