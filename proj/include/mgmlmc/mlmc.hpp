#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mgmlmc/grid.hpp"
#include "mgmlmc/problem.hpp"

namespace mgmlmc {

/// Cost of one solve at level l relative to one at the reference level,
/// 2^(kappa (l - reference)).
struct CostModel {
  double kappa = 2.0;
  int reference_level = 0;

  double solve_cost(int level) const;
  /// Cost of one coupled difference Y_l (solves on l and l-1).
  double sample_cost(int level) const;
};

struct LevelStats {
  std::vector<double> V;           // quadrature of the pointwise variance of I Y_l
  std::vector<double> C;           // cost of one Y_l sample
  std::vector<double> mean_norm;   // |mean of I Y_l|
  std::vector<long> n_used;
  std::vector<bool> extrapolated;  // V_l from the decay fit
  double phi = 0.0;
  bool phi_fitted = false;
  double kappa = 0.0;
  std::optional<double> rho;

  int levels() const { return static_cast<int>(V.size()); }
};

struct SampleAllocation {
  double eps = 0.0;
  double theta = 0.5;
  std::vector<long> n;

  int finest_level() const { return static_cast<int>(n.size()) - 1; }
};

/// n_l = ceil(sqrt(V_l / C_l) sum_i sqrt(V_i C_i) / (theta eps^2)), at
/// least 1.
SampleAllocation optimal_allocation(std::span<const double> V, std::span<const double> C, double eps,
                                    double theta);
SampleAllocation optimal_allocation(const LevelStats& stats, double eps, double theta);
double allocation_cost(std::span<const long> n, std::span<const double> C);
double stochastic_error(std::span<const long> n, std::span<const double> V);

/// Least-squares fit log2 v_l = intercept - rate l over the given levels.
struct DecayFit {
  double rate = 0.0;
  double intercept = 0.0;
  bool fitted = false;
};
DecayFit fit_decay(std::span<const int> levels, std::span<const double> values);

/// Sample sets Omega_{l,k} for every MG/OPT level k <= K and MLMC level
/// l <= k. Sets on different l never share a stream; with `nested` the
/// set (l, k) is a prefix of (l, k+1).
struct MgoptSampleSets {
  int K = 0;
  double q = 1.0 / 16.0;
  bool nested = true;
  std::uint64_t seed = 0;
  /// Test hook: every level l draws from the same stream list.
  bool shared_levels = false;
  std::vector<std::vector<long>> n;  // n[k][l]

  long count(int k, int l) const { return n.at(k).at(l); }
  StreamId stream(int k, int l, long i) const;
  /// Throws InsufficientSamples / InvalidQ when an invariant is broken.
  void check() const;
};

/// n_{l,k} = ceil(q^(K-k) n_{l,K}), at least 1. Throws InvalidQ unless
/// 0 < q < 1/2.
MgoptSampleSets build_sample_sets(int K, const SampleAllocation& at_K, double q, bool nested,
                                  std::uint64_t seed);

/// Solves per level; each coupled sample Y_l counts one solve on l and one
/// on l-1. Updated by the estimator after each parallel batch.
class SolveLedger {
 public:
  explicit SolveLedger(int levels = 0) : counts_(levels, 0) {}

  void add(int level, long count = 1);
  const std::vector<long>& counts() const { return counts_; }
  long total() const;
  int levels() const { return static_cast<int>(counts_.size()); }
  /// Per-level difference this - earlier.
  std::vector<long> since(const std::vector<long>& earlier) const;

 private:
  std::vector<long> counts_;
};

/// sum_l count_l 2^(kappa (l - K)).
double equivalent_fine_solves(std::span<const long> per_level, double kappa, int K);
double equivalent_fine_solves(const SolveLedger& ledger, double kappa, int K);

struct GradientEstimate {
  int level = 0;
  LevelVector value;         // gradient of cost_value at the level
  double cost_value = 0.0;   // matched MLMC cost
  LevelStats stats;
  double eps_used = 0.0;
  std::uint64_t set_seed = 0;
};

enum class Coupling {
  per_level,  // Y_l draws its field on level l and injects to l-1
  top_level   // every field is drawn on the finest grid and injected
};

struct MlmcOptions {
  Coupling coupling = Coupling::per_level;
  int workers = 1;
  /// Also compute V_l of the used samples (prolongs every sample).
  bool variance_stats = false;
};

struct WarmupOptions {
  int samples = 100;
  /// Finest levels whose variance is extrapolated instead of measured.
  int extrapolate_levels = 2;
  double phi_fallback = 4.0;
};

class MlmcEstimator {
 public:
  MlmcEstimator(const Problem& problem, MlmcOptions options = {});

  const Problem& problem() const { return problem_; }
  const MlmcOptions& options() const { return options_; }
  SolveLedger& ledger() { return ledger_; }
  const SolveLedger& ledger() const { return ledger_; }

  /// Estimate at MG/OPT level k for control u_k with sets Omega_{., k}.
  GradientEstimate estimate(const LevelVector& u_k, const MgoptSampleSets& sets) const;

  /// Estimates for every j <= k from one evaluation at level k: entry j is
  /// the level-j estimate at the restricted control using the first
  /// n_{l,j} samples. Requires nested sets; entry k equals estimate().
  std::vector<GradientEstimate> estimate_all(const LevelVector& u_k, const MgoptSampleSets& sets) const;

  /// Warm-up statistics at control u (level L) from separate streams.
  LevelStats level_stats(const LevelVector& u, const WarmupOptions& warmup, const CostModel& cost,
                         std::uint64_t seed) const;

 private:
  struct Sample {
    double dmisfit = 0.0;
    LevelVector y;
  };

  Sample coupled_sample(const std::vector<LevelVector>& controls, int l, std::uint64_t seed,
                        const StreamId& id) const;
  std::vector<std::vector<Sample>> run_samples(const LevelVector& u_k, const MgoptSampleSets& sets,
                                               int k) const;
  GradientEstimate reduce(const std::vector<std::vector<Sample>>& samples, const LevelVector& u_k,
                          int j, const MgoptSampleSets& sets) const;

  const Problem& problem_;
  MlmcOptions options_;
  mutable SolveLedger ledger_;
};

}  // namespace mgmlmc
