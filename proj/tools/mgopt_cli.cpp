#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "experiment.hpp"
#include "mgmlmc/errors.hpp"

using namespace mgmlmc;

int main(int argc, char** argv) {
  CLI::App app{"Robust PDE-constrained optimization with MG/OPT and multilevel Monte Carlo"};
  app.set_version_flag("--version", cli::version_string());
  app.require_subcommand(1);

  std::string config_path;
  std::optional<int> workers;
  std::optional<std::string> output;
  bool deterministic = false;
  app.add_option("--workers", workers, "Threads used for sample evaluation")->check(CLI::PositiveNumber);
  app.add_option("--output", output, "Output directory (overrides run.output)");
  app.add_flag("--deterministic", deterministic, "Fixed reduction order (always on)");

  struct Sub {
    const char* name;
    const char* help;
    std::optional<cli::Mode> mode;
  };
  const Sub subs[] = {
      {"run", "Run the mode selected in the config", std::nullopt},
      {"gradcheck", "Finite-difference check of the MLMC gradients", cli::Mode::gradcheck},
      {"mlmc-report", "Warm-up variance and cost statistics per level", cli::Mode::mlmc_report},
      {"field-sample", "Draw coefficient field realizations", cli::Mode::field_sample},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help)->add_option("config", config_path, "Config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    cli::ExperimentConfig config = cli::load_config(std::filesystem::path(config_path));
    for (const auto& s : subs)
      if (app.got_subcommand(s.name) && s.mode) config.run.mode = *s.mode;
    if (workers) config.run.workers = *workers;
    if (output) config.run.output = *output;
    cli::apply_environment(config);
    return cli::run_experiment(config, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
