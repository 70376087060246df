#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mgmlmc/mgopt.hpp"

namespace mgmlmc {

struct OptimizerConfig {
  double tau = 5e-4;
  double r = 0.5;
  double eps1 = 0.1;
  int i_max = 20;
  int K = 0;
  double q = 1.0 / 16.0;
  double theta = 0.5;
  bool nested = true;
  std::uint64_t seed = 1;
  WarmupOptions warmup;
  MgoptOptions mgopt;
  /// NCG steps allowed to the single-level baseline.
  int baseline_max_iterations = 500;
  /// Refuse allocations above this many samples on one level.
  long max_samples_per_level = 5'000'000;
  /// Lower bound on n at levels whose variance was measured; 0 disables.
  long sample_floor = 0;

  void validate() const;
};

/// eps_next = max(r tau, r eta |g|).
double next_rmse(double eta, double g_norm, double r, double tau);
/// eta = min(1/2, |g| / |g0|). Throws DegenerateStart when |g0| = 0.
double update_eta(double g_norm, double g0_norm);

struct ReportRow {
  int i = 0;
  double eps = 0.0;
  std::vector<long> n;
  double J0 = 0.0, J = 0.0, g0 = 0.0, g = 0.0;
  double solves = 0.0;  // equivalent fine solves, warm-up included
  double time = 0.0;    // seconds
  bool resampled = false;
};

struct Confirmation {
  int after = 0;  // row index i it followed
  double eps = 0.0;
  std::vector<long> n;
  double J = 0.0;
  double g = 0.0;
  bool passed = false;
  double solves = 0.0;
  std::uint64_t warmup_seed = 0;
  std::uint64_t set_seed = 0;
};

struct RunReport {
  std::string method;  // mgopt | baseline
  int K = 0;
  std::vector<ReportRow> rows;
  std::vector<Confirmation> confirmations;
  std::vector<VCycleTrace> traces;  // one per V-cycle
  std::vector<std::string> events;
  bool converged = false;
  std::string status;
  double final_J = std::numeric_limits<double>::quiet_NaN();
  double final_g = std::numeric_limits<double>::quiet_NaN();
  double optimization_solves = 0.0;   // sum of the Solves column
  double confirmation_solves = 0.0;
  double total_time = 0.0;
  LevelVector control;
  /// Sets of the last passing confirmation, for state statistics.
  std::optional<MgoptSampleSets> confirmation_sets;

  double total_solves() const { return optimization_solves + confirmation_solves; }
};

using RowCallback = std::function<void(const RunReport&, const ReportRow&)>;

/// Adaptive-RMSE loop of MG/OPT V-cycles with cheap and confirmed
/// convergence tests.
RunReport robust_optimize(const MlmcEstimator& estimator, const OptimizerConfig& config, LevelVector v0,
                          const RowCallback& on_row = {});

/// Finest-level NCG on MLMC gradients; the samples are refreshed with RMSE
/// max(r tau, |g| / 4) whenever r |g| drops below the current RMSE.
RunReport baseline_optimize(const MlmcEstimator& estimator, const OptimizerConfig& config, LevelVector v0,
                            const RowCallback& on_row = {});

/// Seed for (cycle, purpose) derived from the global seed.
enum class SeedPurpose : std::uint64_t { warmup = 1, sets = 2, confirm_warmup = 3, confirm_sets = 4 };
std::uint64_t cycle_seed(std::uint64_t global_seed, int cycle, SeedPurpose purpose);

/// MLMC estimates of E[y] and V[y] = E[y^2] - E[y]^2 on the finest level,
/// using the level-K sample sets.
struct StateMoments {
  StateSnapshot mean;
  StateSnapshot variance;
  std::vector<long> solves;  // per level
};
StateMoments state_moments(const Problem& problem, const LevelVector& u, const MgoptSampleSets& sets,
                           Coupling coupling, int workers, int time_stride = 1);

}  // namespace mgmlmc
