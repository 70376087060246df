#include "mgmlmc/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "mgmlmc/errors.hpp"
#include "mgmlmc/parallel.hpp"

namespace mgmlmc {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Sampler {
  const MlmcEstimator& est;
  const OptimizerConfig& cfg;
  CostModel cost;

  Sampler(const MlmcEstimator& e, const OptimizerConfig& c)
      : est(e), cfg(c), cost{e.problem().cost_exponent(), c.K} {}

  double equivalent(const std::vector<long>& before) const {
    return equivalent_fine_solves(est.ledger().since(before), cost.kappa, cfg.K);
  }

  MgoptSampleSets sets_for(const LevelVector& v, double eps, std::uint64_t warmup_seed,
                           std::uint64_t set_seed) const {
    const LevelStats st = est.level_stats(v, cfg.warmup, cost, warmup_seed);
    SampleAllocation a = optimal_allocation(st, eps, cfg.theta);
    for (std::size_t l = 0; l < a.n.size(); ++l)
      if (!st.extrapolated[l]) a.n[l] = std::max(a.n[l], cfg.sample_floor);
    for (std::size_t l = 0; l < a.n.size(); ++l)
      if (a.n[l] > cfg.max_samples_per_level)
        throw ConfigError("allocation asks for " + std::to_string(a.n[l]) + " samples on level " +
                          std::to_string(l) + " (limit " + std::to_string(cfg.max_samples_per_level) + ")");
    return build_sample_sets(cfg.K, a, cfg.q, cfg.nested, set_seed);
  }

  Confirmation confirm(const LevelVector& v, int after, RunReport& report) const {
    const auto before = est.ledger().counts();
    Confirmation c;
    c.after = after;
    c.eps = cfg.r * cfg.tau;
    c.warmup_seed = cycle_seed(cfg.seed, after, SeedPurpose::confirm_warmup);
    c.set_seed = cycle_seed(cfg.seed, after, SeedPurpose::confirm_sets);
    MgoptSampleSets sets = sets_for(v, c.eps, c.warmup_seed, c.set_seed);
    c.n = sets.n[cfg.K];
    const GradientEstimate g = est.estimate(v, sets);
    c.J = g.cost_value;
    c.g = est.problem().grid().norm(g.value);
    c.passed = c.g <= cfg.tau;
    c.solves = equivalent(before);
    report.confirmation_solves += c.solves;
    report.confirmations.push_back(c);
    if (c.passed) {
      report.final_J = c.J;
      report.final_g = c.g;
      report.confirmation_sets = std::move(sets);
    }
    std::ostringstream msg;
    msg << "confirmation after " << after << ": |g|=" << c.g << (c.passed ? " passed" : " failed");
    report.events.push_back(msg.str());
    return c;
  }
};

// Bilinear / linear interpolation of node values (boundary included) one
// level up; rows of a time-dependent snapshot are interpolated separately.
StateSnapshot prolong_nodes(const StateSnapshot& c, int spatial_dim) {
  StateSnapshot f;
  if (spatial_dim == 1) {
    f.rows = c.rows;
    f.cols = 2 * (c.cols - 1) + 1;
    f.values.assign(static_cast<std::size_t>(f.rows) * f.cols, 0.0);
    for (int r = 0; r < c.rows; ++r) {
      const double* src = c.values.data() + static_cast<std::size_t>(r) * c.cols;
      double* dst = f.values.data() + static_cast<std::size_t>(r) * f.cols;
      for (int i = 0; i < c.cols; ++i) dst[2 * i] = src[i];
      for (int i = 0; i + 1 < c.cols; ++i) dst[2 * i + 1] = 0.5 * (src[i] + src[i + 1]);
    }
    return f;
  }
  const int nc = c.cols;
  const int nf = 2 * (nc - 1) + 1;
  f.rows = f.cols = nf;
  f.values.assign(static_cast<std::size_t>(nf) * nf, 0.0);
  auto C = [&](int i, int j) { return c.values[static_cast<std::size_t>(j) * nc + i]; };
  for (int j = 0; j < nf; ++j)
    for (int i = 0; i < nf; ++i) {
      const int i0 = i / 2, j0 = j / 2;
      const int i1 = i % 2 ? i0 + 1 : i0, j1 = j % 2 ? j0 + 1 : j0;
      f.values[static_cast<std::size_t>(j) * nf + i] = 0.25 * (C(i0, j0) + C(i1, j0) + C(i0, j1) + C(i1, j1));
    }
  return f;
}

}  // namespace

void OptimizerConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(r > 0.0 && r < 1.0)) throw ConfigError("r must lie in (0, 1)");
  if (!(eps1 > 0.0)) throw ConfigError("eps1 must be > 0");
  if (i_max < 1) throw ConfigError("i_max must be >= 1");
  if (K < 0) throw ConfigError("K must be >= 0");
  if (!(q > 0.0 && q < 0.5)) throw InvalidQ("q must satisfy 0 < q < 1/2");
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
  if (warmup.samples < 2) throw ConfigError("warm-up needs at least 2 samples");
  if (baseline_max_iterations < 1) throw ConfigError("baseline needs at least one iteration");
  if (sample_floor < 0) throw ConfigError("sample_floor must be >= 0");
}

double next_rmse(double eta, double g_norm, double r, double tau) {
  return std::max(r * tau, r * eta * g_norm);
}

double update_eta(double g_norm, double g0_norm) {
  if (!(g0_norm > 0.0)) throw DegenerateStart("starting gradient norm is zero");
  return std::min(0.5, g_norm / g0_norm);
}

std::uint64_t cycle_seed(std::uint64_t global_seed, int cycle, SeedPurpose purpose) {
  return derive_seed(global_seed, static_cast<std::uint64_t>(cycle), static_cast<std::uint64_t>(purpose));
}

RunReport robust_optimize(const MlmcEstimator& estimator, const OptimizerConfig& config, LevelVector v0,
                          const RowCallback& on_row) {
  config.validate();
  if (v0.level != config.K) throw LevelMismatch("starting control must live on level K");
  const Sampler sampler(estimator, config);
  const auto& grid = estimator.problem().grid();
  const auto t_run = Clock::now();
  RunReport report;
  report.method = "mgopt";
  report.K = config.K;
  LevelVector v = std::move(v0);
  double eps = config.eps1;
  double best_g = std::numeric_limits<double>::infinity();
  LevelVector best = v;

  for (int i = 1; i <= config.i_max; ++i) {
    const auto t0 = Clock::now();
    const auto before = estimator.ledger().counts();
    const MgoptSampleSets sets = sampler.sets_for(v, eps, cycle_seed(config.seed, i, SeedPurpose::warmup),
                                                  cycle_seed(config.seed, i, SeedPurpose::sets));
    const MgOpt mg(estimator, sets, config.mgopt);
    VCycleResult res = mg.vcycle(v);
    v = res.final.v;

    ReportRow row;
    row.i = i;
    row.eps = eps;
    row.n = sets.n[config.K];
    row.J0 = res.start.J;
    row.J = res.final.J;
    row.g0 = grid.norm(res.start.g);
    row.g = grid.norm(res.final.g);
    row.solves = sampler.equivalent(before);
    row.time = seconds_since(t0);
    row.resampled = true;
    for (const auto& w : res.trace.warnings) report.events.push_back("cycle " + std::to_string(i) + ": " + w);
    report.traces.push_back(std::move(res.trace));
    report.rows.push_back(row);
    report.optimization_solves += row.solves;
    if (on_row) on_row(report, row);
    if (row.g < best_g) {
      best_g = row.g;
      best = v;
    }

    bool confirmed_fail = false;
    if (row.g <= config.tau) {
      const Confirmation c = sampler.confirm(v, i, report);
      if (c.passed) {
        report.converged = true;
        report.status = "converged";
        report.control = v;
        report.total_time = seconds_since(t_run);
        return report;
      }
      confirmed_fail = true;
    }
    const double eta = update_eta(row.g, row.g0);
    eps = confirmed_fail ? config.r * config.tau : next_rmse(eta, row.g, config.r, config.tau);
  }
  report.status = "max_cycles";
  report.control = best;
  report.total_time = seconds_since(t_run);
  return report;
}

RunReport baseline_optimize(const MlmcEstimator& estimator, const OptimizerConfig& config, LevelVector v0,
                            const RowCallback& on_row) {
  config.validate();
  if (v0.level != config.K) throw LevelMismatch("starting control must live on level K");
  const Sampler sampler(estimator, config);
  const auto& grid = estimator.problem().grid();
  const bool quadratic = estimator.problem().quadratic();
  const auto t_run = Clock::now();
  RunReport report;
  report.method = "baseline";
  report.K = config.K;
  LevelVector v = std::move(v0);
  double eps = config.eps1;
  int resamples = 0;
  double best_g = std::numeric_limits<double>::infinity();
  LevelVector best = v;

  std::optional<MgoptSampleSets> sets;
  std::optional<LevelObjective> obj;
  Evaluation cur;
  NcgState state;
  double pending_solves = 0.0;
  auto resample = [&] {
    const auto before = estimator.ledger().counts();
    ++resamples;
    obj.reset();
    sets = sampler.sets_for(v, eps, cycle_seed(config.seed, resamples, SeedPurpose::warmup),
                            cycle_seed(config.seed, resamples, SeedPurpose::sets));
    obj.emplace(estimator, *sets, config.K, grid.zeros(config.K, v.role), false);
    cur = obj->evaluate(v);
    state = NcgState{};
    pending_solves += sampler.equivalent(before);
  };

  resample();
  bool just_resampled = true;
  for (int step = 1; step <= config.baseline_max_iterations; ++step) {
    const auto t0 = Clock::now();
    const auto before = estimator.ledger().counts();
    ReportRow row;
    row.i = step;
    row.eps = eps;
    row.n = sets->n[config.K];
    row.resampled = just_resampled;
    row.J0 = cur.J;
    row.g0 = grid.norm(cur.g);
    SmoothResult s = ncg_smooth(*obj, cur, 1, quadratic, config.mgopt.ncg, state, "baseline");
    cur = std::move(s.last);
    v = cur.v;
    row.J = cur.J;
    row.g = grid.norm(cur.g);
    row.solves = sampler.equivalent(before) + pending_solves;
    pending_solves = 0.0;
    row.time = seconds_since(t0);
    report.rows.push_back(row);
    report.optimization_solves += row.solves;
    if (on_row) on_row(report, row);
    if (row.g < best_g) {
      best_g = row.g;
      best = v;
    }
    just_resampled = false;

    if (row.g <= config.tau) {
      const Confirmation c = sampler.confirm(v, step, report);
      if (c.passed) {
        report.converged = true;
        report.status = "converged";
        report.control = v;
        report.total_time = seconds_since(t_run);
        return report;
      }
      eps = config.r * config.tau;
      resample();
      just_resampled = true;
      continue;
    }
    if (config.r * row.g < eps) {
      const double next = std::max(config.r * config.tau, 0.25 * row.g);
      if (next < eps) {
        eps = next;
        resample();
        just_resampled = true;
      }
    }
  }
  report.status = "max_iterations";
  report.control = best;
  report.total_time = seconds_since(t_run);
  return report;
}

StateMoments state_moments(const Problem& problem, const LevelVector& u, const MgoptSampleSets& sets,
                           Coupling coupling, int workers, int time_stride) {
  const auto& grid = problem.grid();
  const int K = u.level;
  const int sdim = grid.dim();
  std::vector<LevelVector> controls(K + 1);
  controls[K] = u;
  for (int l = K - 1; l >= 0; --l) controls[l] = grid.restrict(controls[l + 1]);

  StateMoments out;
  out.solves.assign(K + 1, 0);
  StateSnapshot mean, second;
  for (int l = 0; l <= K; ++l) {
    const long n = sets.count(K, l);
    std::vector<StateSnapshot> d1(n), d2(n);
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
      const RngStream stream(sets.seed, sets.stream(K, l, static_cast<long>(i)));
      FieldSample f;
      if (coupling == Coupling::top_level) {
        f = problem.draw_field(grid.finest_level(), stream);
        while (f.level > l) f = restrict_field(f, f.level - 1);
      } else {
        f = problem.draw_field(l, stream);
      }
      StateSnapshot y = problem.state(controls[l], f, time_stride);
      StateSnapshot y2 = y;
      for (double& x : y2.values) x *= x;
      if (l > 0) {
        const StateSnapshot coarse = problem.state(controls[l - 1], restrict_field(f, l - 1), time_stride);
        StateSnapshot coarse2 = coarse;
        for (double& x : coarse2.values) x *= x;
        // same interpolation as the coarser running moments, so levels telescope
        const StateSnapshot yc = prolong_nodes(coarse, sdim);
        const StateSnapshot yc2 = prolong_nodes(coarse2, sdim);
        for (std::size_t p = 0; p < y.values.size(); ++p) {
          y2.values[p] -= yc2.values[p];
          y.values[p] -= yc.values[p];
        }
      }
      d1[i] = std::move(y);
      d2[i] = std::move(y2);
    });
    out.solves[l] += n;
    if (l > 0) out.solves[l - 1] += n;
    StateSnapshot m1 = d1[0], m2 = d2[0];
    for (long i = 1; i < n; ++i)
      for (std::size_t p = 0; p < m1.values.size(); ++p) {
        m1.values[p] += d1[i].values[p];
        m2.values[p] += d2[i].values[p];
      }
    for (std::size_t p = 0; p < m1.values.size(); ++p) {
      m1.values[p] /= static_cast<double>(n);
      m2.values[p] /= static_cast<double>(n);
    }
    if (l == 0) {
      mean = std::move(m1);
      second = std::move(m2);
    } else {
      mean = prolong_nodes(mean, sdim);
      second = prolong_nodes(second, sdim);
      for (std::size_t p = 0; p < mean.values.size(); ++p) {
        mean.values[p] += m1.values[p];
        second.values[p] += m2.values[p];
      }
    }
  }
  out.variance = second;
  for (std::size_t p = 0; p < mean.values.size(); ++p)
    out.variance.values[p] = std::max(0.0, second.values[p] - mean.values[p] * mean.values[p]);
  out.mean = std::move(mean);
  return out;
}

}  // namespace mgmlmc
