#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mgmlmc/mlmc.hpp"

namespace mgmlmc {

/// Point, shifted cost J_k = Jhat_k - <tau_k, v> and its gradient, plus the
/// unshifted estimate. `coarser[j]` holds the level-j estimate at the
/// restricted point when it came for free from nested sample sets.
struct Evaluation {
  LevelVector v;
  double J = 0.0;
  LevelVector g;
  GradientEstimate raw;
  std::vector<GradientEstimate> coarser;
};

/// J_k on MG/OPT level k with fixed sample sets and a linear shift tau_k.
class LevelObjective {
 public:
  LevelObjective(const MlmcEstimator& estimator, const MgoptSampleSets& sets, int k, LevelVector tau,
                 bool prefixes);

  int level() const { return k_; }
  const GridHierarchy& grid() const { return estimator_.problem().grid(); }
  const LevelVector& tau() const { return tau_; }
  Evaluation evaluate(const LevelVector& v) const;
  int evaluations() const { return evaluations_; }

 private:
  const MlmcEstimator& estimator_;
  const MgoptSampleSets& sets_;
  int k_;
  LevelVector tau_;
  bool prefixes_;
  mutable int evaluations_ = 0;
};

struct NcgOptions {
  /// Form the gradient at the new point as (1-s) g(v) + s g(v+d) instead of
  /// evaluating it (quadratic problems only).
  bool affine_gradient = false;
  double armijo_c1 = 1e-4;
  double backtrack_factor = 4.0;
  int max_backtracks = 30;
};

struct SmootherStep {
  int level = 0;
  std::string phase;  // pre, post, coarsest, baseline
  double J = 0.0;
  double g_norm = 0.0;
  double step = 0.0;
  bool restarted = false;
  bool quadratic_step = true;  // false when the Armijo fallback was used
  int backtracks = 0;
};

struct SmoothResult {
  Evaluation last;
  int steps = 0;
  int evaluations = 0;
  int backtracks = 0;
  std::vector<SmootherStep> trace;
  /// Dai-Yuan denominators <d_{j-1}, g_j - g_{j-1}> and <d_{j-1}, g_j>.
  std::vector<double> dy_denominators;
  std::vector<double> dy_orthogonality;
  std::vector<LevelVector> iterates;  // v after each step
  /// Stopped early: the predicted decrease was below the rounding of J.
  bool stalled = false;
};

/// Search direction carried between NCG steps.
struct NcgState {
  LevelVector d;
  LevelVector g_prev;
  bool started = false;
  /// Trial point v + t d of the secant step; quadratic problems reuse the
  /// last accepted step length.
  double trial_step = 1.0;
};

/// `steps` Dai-Yuan NCG iterations on obj from `start`, restarting with
/// d = -g. Quadratic problems use the secant step along d; otherwise the
/// secant step is tried first and replaced by Armijo backtracking when it
/// is negative, unstable or not sufficiently decreasing.
SmoothResult ncg_smooth(const LevelObjective& obj, Evaluation start, int steps, bool quadratic,
                        const NcgOptions& options, const std::string& phase = "smooth");
/// Same, continuing from `state` (a fresh state starts with d = -g).
SmoothResult ncg_smooth(const LevelObjective& obj, Evaluation start, int steps, bool quadratic,
                        const NcgOptions& options, NcgState& state, const std::string& phase);

struct LineSearchResult {
  double step = 0.0;
  Evaluation eval;
  int backtracks = 0;
  int evaluations = 0;
  bool warning = false;
};

/// Backtracking from s = 1, halving, until J(v + s d) < J(v). d = 0 is
/// accepted at s = 1 without an evaluation; s = 0 after max_backtracks.
LineSearchResult coarse_correction_linesearch(const LevelObjective& obj, const Evaluation& at_v,
                                              const LevelVector& d, int max_backtracks = 30);

struct SmoothingSchedule {
  std::vector<int> nu;  // presmoothing per level, index k
  std::vector<int> mu;  // postsmoothing per level
  int coarsest_steps = 8;

  /// nu_K = 0, nu_k = 2^(K-k-1), mu_k = 2^(K-k), coarsest 4 + 4.
  static SmoothingSchedule standard(int K);
  void validate(int K) const;
};

struct MgoptOptions {
  SmoothingSchedule schedule;
  NcgOptions ncg;
  int max_backtracks = 30;
  /// Take the coarse gradient for tau from nested prefix sums when possible.
  bool reuse_prefixes = true;
  /// Re-evaluate the coarse gradient from scratch for the coherence record.
  bool verify_coherence = false;
};

struct CoherenceRecord {
  int level = 0;  // fine level k
  double deviation = 0.0;
  double relative = 0.0;  // deviation / (1 + |g_k|)
  double reevaluated = std::numeric_limits<double>::quiet_NaN();
};

struct DescentRecord {
  int level = 0;
  double directional = 0.0;  // <g_k(v_{k,1}), d_k>
  double d_norm = 0.0;
  bool coarse_decreased = false;
  double step = 0.0;
  int backtracks = 0;
  bool warning = false;
};

struct VCycleTrace {
  std::vector<CoherenceRecord> coherence;
  std::vector<DescentRecord> descent;
  std::vector<SmootherStep> steps;
  std::vector<std::string> warnings;
  int evaluations = 0;
  int backtracks = 0;
};

struct VCycleResult {
  Evaluation start;
  Evaluation final;
  VCycleTrace trace;
};

class MgOpt {
 public:
  MgOpt(const MlmcEstimator& estimator, const MgoptSampleSets& sets, MgoptOptions options);

  /// One V-cycle called with tau_K = 0 on the finest level of the sets.
  VCycleResult vcycle(const LevelVector& v_K) const;
  /// Recursive cycle on level k; start, when given, is the evaluation at v.
  Evaluation cycle(const LevelVector& v, const LevelVector& tau, int k, std::optional<Evaluation> start,
                   VCycleTrace& trace) const;

 private:
  const MlmcEstimator& estimator_;
  const MgoptSampleSets& sets_;
  MgoptOptions options_;
  bool quadratic_;
};

}  // namespace mgmlmc
