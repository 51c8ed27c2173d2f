// Command-line front end: loads a JSON experiment config, applies overrides
// and runs it. Exit codes: 0 ok, 1 config, 2 I/O, 3 non-finite abort,
// 4 other failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "smfg/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Single-sample-path learning of Boltzmann mean-field equilibria on congestion grids"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<std::string> mode;
  bool quiet = false;
  app.add_option("--config", config_path, "experiment config (JSON)")->required();
  app.add_option("--seed", seed, "override the config seed");
  app.add_option("--output-dir", output_dir, "override the output directory");
  app.add_option("--mode", mode, "override the mode")
      ->check(CLI::IsMember({"sandbox", "oracle", "compare", "probe"}));
  app.add_flag("--quiet", quiet, "suppress progress messages");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : smfg::exit_code::kConfig;
  }

  smfg::ExperimentConfig cfg;
  try {
    cfg = smfg::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (output_dir) cfg.output_dir = *output_dir;
    if (mode) cfg.mode = smfg::experiment_mode_from_string(*mode);
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return smfg::exit_code::kConfig;
  }

  smfg::RunOptions opts;
  opts.quiet = quiet;
  const smfg::ExperimentOutcome outcome = smfg::run_experiment(cfg, opts);
  if (outcome.exit_code == 0 && !quiet) {
    for (const auto& f : outcome.files) std::cerr << "wrote " << f.string() << '\n';
  }
  return outcome.exit_code;
}
