#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgmlmc/driver.hpp"
#include "mgmlmc/pde_burgers.hpp"
#include "mgmlmc/pde_elliptic.hpp"

namespace mgmlmc::cli {

enum class Mode { mgopt, baseline, gradcheck, mlmc_report, field_sample };

Mode parse_mode(const std::string& s);
std::string mode_name(Mode m);

struct ProblemSection {
  std::string name = "laplace";  // laplace | dtn | burgers
  int coarse_nodes = 17;
  int K = 2;
  double alpha = 1e-6;
  CovarianceSpec covariance;
  double lin_tol = 1e-10;
  FaceMean face_mean = FaceMean::arithmetic;
  // burgers only
  double s = -1.0;
  double final_time = 1.0;
  int time_points = 10001;
};

struct RunSection {
  Mode mode = Mode::mgopt;
  std::filesystem::path output = "out";
  std::uint64_t seed = 1;
  int workers = 1;
  Coupling coupling = Coupling::per_level;
  int state_time_stride = 100;
  // gradcheck
  std::vector<long> gradcheck_samples;  // n_{l,K}; empty means 2^(K-l)
  int gradcheck_directions = 5;
  double gradcheck_step = 1e-5;
  double gradcheck_lin_tol = 1e-13;
  double gradcheck_amplitude = 0.1;
  // mlmc-report
  double report_eps = 0.0;  // 0 uses r * tau
  // field-sample
  int field_samples = 1;
  int field_level = -1;  // -1 uses K
};

struct ExperimentConfig {
  ProblemSection problem;
  OptimizerConfig optimizer;
  RunSection run;

  /// Range checks on every field; throws ConfigError.
  void validate() const;
};

/// Reads the sectioned key = value format. Unknown keys are errors.
ExperimentConfig load_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies the MGOPT_SEED environment override, if set.
void apply_environment(ExperimentConfig& config);

std::unique_ptr<Problem> make_problem(const ProblemSection& p);
/// Problem with lin_tol replaced (gradient checks).
std::unique_ptr<Problem> make_problem(const ProblemSection& p, double lin_tol);

struct GradcheckRow {
  int k = 0;
  int direction = 0;
  double fd = 0.0;
  double analytic = 0.0;
  double rel_error = 0.0;
};

struct GradcheckResult {
  std::vector<GradcheckRow> rows;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error <= tolerance; }
};

/// Central differences of the matched MLMC cost on every MG/OPT level.
GradcheckResult gradcheck(const ExperimentConfig& config);

/// Version string of the build ("mgmlmc <version>+<git describe>").
std::string version_string();

/// Runs the mode and writes its artifacts to config.run.output. Returns the
/// process exit code: 0 success, 2 not converged / check failed; errors
/// are thrown.
int run_experiment(const ExperimentConfig& config, std::ostream& log);

}  // namespace mgmlmc::cli
