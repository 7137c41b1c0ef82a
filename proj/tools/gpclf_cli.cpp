#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "gpclf/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kFallbackBudget = 3;
constexpr int kIoError = 4;

int run(const std::string& path, const gpclf::RunOptions& options, std::optional<std::uint64_t> seed,
        std::optional<std::string> output_dir) {
  gpclf::ExperimentConfig cfg = gpclf::load_config(path);
  if (seed) cfg.seed = *seed;
  if (output_dir) cfg.output_dir = *output_dir;
  const gpclf::ComparisonReport report = gpclf::run_experiment(cfg, options);
  gpclf::write_report(std::cout, report);
  int code = 0;
  for (const gpclf::ControllerReport& c : report.controllers) {
    if (c.fallback_fraction() > 0.05) {
      std::cerr << c.name << ": " << c.fallback_steps << " of " << c.trajectory.size()
                << " steps used the fallback input\n";
      code = kFallbackBudget;
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GP-CLF experiment runner"};
  app.require_subcommand(1);

  std::string config;
  gpclf::RunOptions options;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::string checkpoint;

  CLI::App* run_cmd = app.add_subcommand("run", "train (or load) a model and compare the four controllers");
  run_cmd->add_option("config", config, "experiment config file")->required();
  run_cmd->add_option("--load-checkpoint", checkpoint, "skip training and use this checkpoint");
  run_cmd->add_flag("--dump-failed-solves", options.dump_failed_solves,
                    "write every failed solve to <output_dir>/failed_solves");
  run_cmd->add_option("--seed", seed, "overrides experiment.seed");
  run_cmd->add_option("--output-dir", output_dir, "overrides experiment.output_dir");
  run_cmd->add_flag("--ignore-config-hash", options.ignore_hash,
                    "accept a checkpoint made with a different config");

  CLI::App* validate_cmd = app.add_subcommand("validate", "check a config file and list every problem");
  validate_cmd->add_option("config", config, "experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (validate_cmd->parsed()) {
      const std::vector<std::string> diag = gpclf::validate_config(config);
      for (const std::string& d : diag) std::cerr << config << ": " << d << "\n";
      if (!diag.empty()) return kConfigError;
      std::cout << config << ": ok\n";
      return 0;
    }
    if (!checkpoint.empty()) options.load_checkpoint = checkpoint;
    return run(config, options, seed, output_dir);
  } catch (const gpclf::ConfigError& e) {
    for (const std::string& d : e.diagnostics()) std::cerr << config << ": " << d << "\n";
    return kConfigError;
  } catch (const gpclf::HashMismatch& e) {
    std::cerr << e.what() << " (pass --ignore-config-hash to use it anyway)\n";
    return kConfigError;
  } catch (const gpclf::IoError& e) {
    std::cerr << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
