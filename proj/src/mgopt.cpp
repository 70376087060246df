#include "mgmlmc/mgopt.hpp"

#include <limits>

#include <cmath>

#include "mgmlmc/errors.hpp"

namespace mgmlmc {
namespace {

bool all_zero(const LevelVector& d) {
  for (double x : d.values)
    if (x != 0.0) return false;
  return true;
}

std::optional<Evaluation> try_evaluate(const LevelObjective& obj, const LevelVector& v) {
  try {
    return obj.evaluate(v);
  } catch (const StabilityViolation&) {
    return std::nullopt;
  }
}

}  // namespace

LevelObjective::LevelObjective(const MlmcEstimator& estimator, const MgoptSampleSets& sets, int k,
                               LevelVector tau, bool prefixes)
    : estimator_(estimator), sets_(sets), k_(k), tau_(std::move(tau)), prefixes_(prefixes && sets.nested) {
  if (tau_.level != k) throw LevelMismatch("tau lives on the wrong level");
}

Evaluation LevelObjective::evaluate(const LevelVector& v) const {
  ++evaluations_;
  Evaluation e;
  if (prefixes_ && k_ > 0) {
    auto all = estimator_.estimate_all(v, sets_);
    e.raw = std::move(all.back());
    all.pop_back();
    e.coarser = std::move(all);
  } else {
    e.raw = estimator_.estimate(v, sets_);
  }
  e.v = v;
  const auto& grid = estimator_.problem().grid();
  e.J = e.raw.cost_value - grid.inner_product(tau_, v);
  e.g = linear_combination(1.0, e.raw.value, -1.0, tau_);
  return e;
}

SmoothResult ncg_smooth(const LevelObjective& obj, Evaluation start, int steps, bool quadratic,
                        const NcgOptions& options, const std::string& phase) {
  NcgState state;
  return ncg_smooth(obj, std::move(start), steps, quadratic, options, state, phase);
}

SmoothResult ncg_smooth(const LevelObjective& obj, Evaluation start, int steps, bool quadratic,
                        const NcgOptions& options, NcgState& state, const std::string& phase) {
  const auto& grid = obj.grid();
  SmoothResult res;
  res.last = std::move(start);
  const int evals0 = obj.evaluations();
  LevelVector& d = state.d;
  LevelVector& g_prev = state.g_prev;
  for (int j = 0; j < steps; ++j) {
    Evaluation& cur = res.last;
    const double gg = grid.inner_product(cur.g, cur.g);
    if (gg == 0.0) break;
    SmootherStep rec;
    rec.level = obj.level();
    rec.phase = phase;
    if (!state.started) {
      state.started = true;
      d = scaled(-1.0, cur.g);
      rec.restarted = true;
    } else {
      const LevelVector diff = linear_combination(1.0, cur.g, -1.0, g_prev);
      const double denom = grid.inner_product(d, diff);
      res.dy_denominators.push_back(denom);
      res.dy_orthogonality.push_back(grid.inner_product(d, cur.g));
      if (denom <= 0.0) {
        d = scaled(-1.0, cur.g);
        rec.restarted = true;
      } else {
        d = linear_combination(-1.0, cur.g, gg / denom, d);
        if (grid.inner_product(cur.g, d) >= 0.0) {
          d = scaled(-1.0, cur.g);
          rec.restarted = true;
        }
      }
    }
    const double gd = grid.inner_product(cur.g, d);

    const double t = quadratic ? state.trial_step : 1.0;
    std::optional<Evaluation> trial = quadratic ? std::optional<Evaluation>(obj.evaluate(
                                                      linear_combination(1.0, cur.v, t, d)))
                                                : try_evaluate(obj, linear_combination(1.0, cur.v, 1.0, d));
    std::optional<Evaluation> accepted;
    double s = 0.0;
    double curv = 0.0;
    if (trial) {
      curv = grid.inner_product(linear_combination(1.0, trial->g, -1.0, cur.g), d) / t;
      if (curv > 0.0) {
        s = -gd / curv;
        const double r = s / t;
        if (s == t) {
          accepted = *trial;
        } else if (quadratic && options.affine_gradient) {
          Evaluation e;
          e.v = linear_combination(1.0, cur.v, s, d);
          e.g = linear_combination(1.0 - r, cur.g, r, trial->g);
          e.J = cur.J + s * gd + 0.5 * s * s * curv;
          e.raw = cur.raw;
          e.raw.value = linear_combination(1.0 - r, cur.raw.value, r, trial->raw.value);
          const double raw_gd = grid.inner_product(cur.raw.value, d);
          const double raw_curv =
              grid.inner_product(linear_combination(1.0, trial->raw.value, -1.0, cur.raw.value), d) / t;
          e.raw.cost_value = cur.raw.cost_value + s * raw_gd + 0.5 * s * s * raw_curv;
          accepted = std::move(e);
        } else if (s > 0.0) {
          accepted = quadratic ? std::optional<Evaluation>(obj.evaluate(linear_combination(1.0, cur.v, s, d)))
                               : try_evaluate(obj, linear_combination(1.0, cur.v, s, d));
        }
        if (accepted && !quadratic && !(accepted->J <= cur.J + options.armijo_c1 * s * gd))
          accepted.reset();
        // exact minimizer along d; J may only move by rounding
        if (accepted && quadratic &&
            !(accepted->J <= cur.J + 16.0 * std::numeric_limits<double>::epsilon() * std::abs(cur.J)))
          accepted.reset();
      }
    }
    if (!accepted) {
      // stationary to working precision: no step can show a decrease in J
      const double predicted = (trial && curv > 0.0 && s > 0.0) ? 0.5 * s * -gd : -gd;
      if (predicted <= 16.0 * std::numeric_limits<double>::epsilon() * std::abs(cur.J)) {
        res.stalled = true;
        break;
      }
      rec.quadratic_step = false;
      s = 1.0;
      for (int b = 0; b <= options.max_backtracks; ++b) {
        std::optional<Evaluation> cand =
            (b == 0 && trial && t == 1.0) ? trial : try_evaluate(obj, linear_combination(1.0, cur.v, s, d));
        if (cand && cand->J <= cur.J + options.armijo_c1 * s * gd) {
          accepted = std::move(cand);
          break;
        }
        ++rec.backtracks;
        s /= options.backtrack_factor;
      }
      if (!accepted)
        throw LineSearchFailure("NCG line search found no acceptable step on level " +
                                std::to_string(obj.level()));
    }
    if (quadratic && rec.quadratic_step) state.trial_step = s;
    g_prev = cur.g;
    res.backtracks += rec.backtracks;
    res.last = std::move(*accepted);
    rec.step = s;
    rec.J = res.last.J;
    rec.g_norm = grid.norm(res.last.g);
    res.trace.push_back(rec);
    res.iterates.push_back(res.last.v);
    ++res.steps;
  }
  res.evaluations = obj.evaluations() - evals0;
  return res;
}

LineSearchResult coarse_correction_linesearch(const LevelObjective& obj, const Evaluation& at_v,
                                              const LevelVector& d, int max_backtracks) {
  LineSearchResult r;
  if (all_zero(d)) {
    r.step = 1.0;
    r.eval = at_v;
    return r;
  }
  const int evals0 = obj.evaluations();
  double s = 1.0;
  for (int b = 0; b <= max_backtracks; ++b) {
    auto e = try_evaluate(obj, linear_combination(1.0, at_v.v, s, d));
    if (e && e->J < at_v.J) {
      r.step = s;
      r.eval = std::move(*e);
      r.evaluations = obj.evaluations() - evals0;
      return r;
    }
    if (b < max_backtracks) {
      ++r.backtracks;
      s *= 0.5;
    }
  }
  r.step = 0.0;
  r.eval = at_v;
  r.warning = true;
  r.evaluations = obj.evaluations() - evals0;
  return r;
}

SmoothingSchedule SmoothingSchedule::standard(int K) {
  SmoothingSchedule s;
  s.nu.assign(K + 1, 0);
  s.mu.assign(K + 1, 0);
  for (int k = 1; k <= K; ++k) {
    s.nu[k] = k == K ? 0 : 1 << (K - k - 1);
    s.mu[k] = 1 << (K - k);
  }
  s.coarsest_steps = 8;
  return s;
}

void SmoothingSchedule::validate(int K) const {
  if (static_cast<int>(nu.size()) != K + 1 || static_cast<int>(mu.size()) != K + 1)
    throw ConfigError("smoothing schedule needs one entry per MG/OPT level");
  for (int k = 0; k <= K; ++k)
    if (nu[k] < 0 || mu[k] < 0) throw ConfigError("smoothing steps must be >= 0");
  if (coarsest_steps < 0) throw ConfigError("coarsest steps must be >= 0");
}

MgOpt::MgOpt(const MlmcEstimator& estimator, const MgoptSampleSets& sets, MgoptOptions options)
    : estimator_(estimator),
      sets_(sets),
      options_(std::move(options)),
      quadratic_(estimator.problem().quadratic()) {
  options_.schedule.validate(sets.K);
}

VCycleResult MgOpt::vcycle(const LevelVector& v_K) const {
  if (v_K.level != sets_.K) throw LevelMismatch("V-cycle must start on the finest MG/OPT level");
  VCycleResult r;
  const LevelObjective top(estimator_, sets_, sets_.K, estimator_.problem().grid().zeros(sets_.K, v_K.role),
                           options_.reuse_prefixes);
  r.start = top.evaluate(v_K);
  r.trace.evaluations += 1;
  r.final = cycle(v_K, top.tau(), sets_.K, r.start, r.trace);
  return r;
}

Evaluation MgOpt::cycle(const LevelVector& v, const LevelVector& tau, int k, std::optional<Evaluation> start,
                        VCycleTrace& trace) const {
  const auto& grid = estimator_.problem().grid();
  const auto& sched = options_.schedule;
  const LevelObjective obj(estimator_, sets_, k, tau, options_.reuse_prefixes && !options_.ncg.affine_gradient);
  Evaluation e0 = start ? std::move(*start) : obj.evaluate(v);
  auto absorb = [&](const SmoothResult& s) {
    trace.steps.insert(trace.steps.end(), s.trace.begin(), s.trace.end());
    trace.evaluations += s.evaluations;
    trace.backtracks += s.backtracks;
  };
  if (!start) trace.evaluations += 1;

  if (k == 0) {
    SmoothResult s = ncg_smooth(obj, std::move(e0), sched.coarsest_steps, quadratic_, options_.ncg, "coarsest");
    absorb(s);
    return std::move(s.last);
  }

  SmoothResult pre = ncg_smooth(obj, std::move(e0), sched.nu[k], quadratic_, options_.ncg, "pre");
  absorb(pre);
  Evaluation e1 = std::move(pre.last);

  const LevelVector v_c = grid.restrict(e1.v);
  GradientEstimate coarse_raw;
  std::vector<GradientEstimate> coarse_prefixes;
  if (static_cast<int>(e1.coarser.size()) == k) {
    coarse_raw = e1.coarser[k - 1];
    coarse_prefixes.assign(e1.coarser.begin(), e1.coarser.begin() + (k - 1));
  } else {
    Evaluation ce = LevelObjective(estimator_, sets_, k - 1, grid.zeros(k - 1, v.role),
                                   options_.reuse_prefixes && !options_.ncg.affine_gradient)
                        .evaluate(v_c);
    trace.evaluations += 1;
    coarse_raw = std::move(ce.raw);
    coarse_prefixes = std::move(ce.coarser);
  }
  // tau_{k-1} = R tau_k + grad Jhat_{k-1}(v_{k-1}) - R grad Jhat_k(v_{k,1})
  LevelVector tau_c = grid.restrict(tau);
  axpy(1.0, coarse_raw.value, tau_c);
  axpy(-1.0, grid.restrict(e1.raw.value), tau_c);

  const LevelObjective coarse_obj(estimator_, sets_, k - 1, tau_c,
                                  options_.reuse_prefixes && !options_.ncg.affine_gradient);
  Evaluation ce;
  ce.v = v_c;
  ce.J = coarse_raw.cost_value - grid.inner_product(tau_c, v_c);
  ce.g = linear_combination(1.0, coarse_raw.value, -1.0, tau_c);
  ce.raw = coarse_raw;
  ce.coarser = std::move(coarse_prefixes);

  CoherenceRecord coh;
  coh.level = k;
  const LevelVector rg = grid.restrict(e1.g);
  coh.deviation = grid.norm(linear_combination(1.0, rg, -1.0, ce.g));
  coh.relative = coh.deviation / (1.0 + grid.norm(e1.g));
  if (options_.verify_coherence) {
    const GradientEstimate fresh = estimator_.estimate(v_c, sets_);
    const LevelVector g_fresh = linear_combination(1.0, fresh.value, -1.0, tau_c);
    coh.reevaluated = grid.norm(linear_combination(1.0, rg, -1.0, g_fresh)) / (1.0 + grid.norm(e1.g));
  }
  trace.coherence.push_back(coh);

  const double J_coarse0 = ce.J;
  Evaluation rec = cycle(v_c, tau_c, k - 1, std::move(ce), trace);
  LevelVector d = grid.prolong(linear_combination(1.0, rec.v, -1.0, v_c));

  DescentRecord dr;
  dr.level = k;
  dr.directional = grid.inner_product(e1.g, d);
  dr.d_norm = grid.norm(d);
  dr.coarse_decreased = rec.J < J_coarse0;
  LineSearchResult ls = coarse_correction_linesearch(obj, e1, d, options_.max_backtracks);
  dr.step = ls.step;
  dr.backtracks = ls.backtracks;
  dr.warning = ls.warning;
  trace.descent.push_back(dr);
  trace.evaluations += ls.evaluations;
  trace.backtracks += ls.backtracks;
  if (ls.warning)
    trace.warnings.push_back("coarse correction on level " + std::to_string(k) +
                             " found no descent; step set to 0");

  SmoothResult post = ncg_smooth(obj, std::move(ls.eval), sched.mu[k], quadratic_, options_.ncg, "post");
  absorb(post);
  return std::move(post.last);
}

}  // namespace mgmlmc
