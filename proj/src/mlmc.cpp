#include "mgmlmc/mlmc.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "mgmlmc/errors.hpp"
#include "mgmlmc/parallel.hpp"

namespace mgmlmc {

double CostModel::solve_cost(int level) const { return std::exp2(kappa * (level - reference_level)); }

double CostModel::sample_cost(int level) const {
  return solve_cost(level) + (level > 0 ? solve_cost(level - 1) : 0.0);
}

SampleAllocation optimal_allocation(std::span<const double> V, std::span<const double> C, double eps,
                                    double theta) {
  if (!(eps > 0.0)) throw ConfigError("RMSE tolerance must be > 0");
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
  if (V.size() != C.size() || V.empty()) throw ConfigError("allocation needs matching V and C");
  double sum = 0.0;
  for (std::size_t l = 0; l < V.size(); ++l) {
    if (!(C[l] > 0.0)) throw ConfigError("sample costs must be > 0");
    sum += std::sqrt(std::max(0.0, V[l]) * C[l]);
  }
  SampleAllocation a{eps, theta, std::vector<long>(V.size(), 1)};
  const double scale = sum / (theta * eps * eps);
  for (std::size_t l = 0; l < V.size(); ++l) {
    const double x = std::ceil(std::sqrt(std::max(0.0, V[l]) / C[l]) * scale);
    if (x > static_cast<double>(std::numeric_limits<long>::max() / 2))
      throw ConfigError("sample count overflow at level " + std::to_string(l));
    a.n[l] = std::max(1L, static_cast<long>(x));
  }
  return a;
}

SampleAllocation optimal_allocation(const LevelStats& stats, double eps, double theta) {
  return optimal_allocation(stats.V, stats.C, eps, theta);
}

double allocation_cost(std::span<const long> n, std::span<const double> C) {
  double c = 0.0;
  for (std::size_t l = 0; l < n.size(); ++l) c += static_cast<double>(n[l]) * C[l];
  return c;
}

double stochastic_error(std::span<const long> n, std::span<const double> V) {
  double e = 0.0;
  for (std::size_t l = 0; l < n.size(); ++l) e += V[l] / static_cast<double>(n[l]);
  return e;
}

DecayFit fit_decay(std::span<const int> levels, std::span<const double> values) {
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(values[i] > 0.0)) continue;
    const double x = levels[i];
    const double y = std::log2(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  DecayFit f;
  const double det = n * sxx - sx * sx;
  if (n < 2 || det == 0.0) return f;
  const double slope = (n * sxy - sx * sy) / det;
  f.rate = -slope;
  f.intercept = (sy - slope * sx) / n;
  f.fitted = true;
  return f;
}

StreamId MgoptSampleSets::stream(int k, int l, long i) const {
  return StreamId{nested ? K : k, shared_levels ? 0 : l, static_cast<std::uint64_t>(i)};
}

void MgoptSampleSets::check() const {
  if (!(q > 0.0 && q < 0.5)) throw InvalidQ("q must satisfy 0 < q < 1/2");
  if (static_cast<int>(n.size()) != K + 1) throw InsufficientSamples("sample sets missing MG/OPT levels");
  for (int k = 0; k <= K; ++k) {
    if (static_cast<int>(n[k].size()) != k + 1)
      throw InsufficientSamples("MG/OPT level " + std::to_string(k) + " needs k+1 MLMC levels");
    for (int l = 0; l <= k; ++l) {
      if (n[k][l] < 1) throw InsufficientSamples("empty sample set");
      if (nested && k < K && n[k][l] > n[k + 1][l])
        throw InsufficientSamples("nested sample sets must grow with the MG/OPT level");
    }
  }
}

MgoptSampleSets build_sample_sets(int K, const SampleAllocation& at_K, double q, bool nested,
                                  std::uint64_t seed) {
  if (!(q > 0.0 && q < 0.5)) throw InvalidQ("q must satisfy 0 < q < 1/2, got " + std::to_string(q));
  if (at_K.finest_level() != K)
    throw LevelMismatch("allocation has " + std::to_string(at_K.n.size()) + " levels, expected " +
                        std::to_string(K + 1));
  MgoptSampleSets s;
  s.K = K;
  s.q = q;
  s.nested = nested;
  s.seed = seed;
  s.n.resize(K + 1);
  for (int k = 0; k <= K; ++k) {
    const double f = std::pow(q, K - k);
    for (int l = 0; l <= k; ++l)
      s.n[k].push_back(std::max(1L, static_cast<long>(std::ceil(f * static_cast<double>(at_K.n[l])))));
  }
  s.check();
  return s;
}

void SolveLedger::add(int level, long count) {
  if (level >= static_cast<int>(counts_.size())) counts_.resize(level + 1, 0);
  counts_[level] += count;
}

long SolveLedger::total() const {
  long t = 0;
  for (long c : counts_) t += c;
  return t;
}

std::vector<long> SolveLedger::since(const std::vector<long>& earlier) const {
  std::vector<long> d = counts_;
  for (std::size_t l = 0; l < earlier.size() && l < d.size(); ++l) d[l] -= earlier[l];
  return d;
}

double equivalent_fine_solves(std::span<const long> per_level, double kappa, int K) {
  double s = 0.0;
  for (std::size_t l = 0; l < per_level.size(); ++l)
    s += static_cast<double>(per_level[l]) * std::exp2(kappa * (static_cast<int>(l) - K));
  return s;
}

double equivalent_fine_solves(const SolveLedger& ledger, double kappa, int K) {
  return equivalent_fine_solves(ledger.counts(), kappa, K);
}

MlmcEstimator::MlmcEstimator(const Problem& problem, MlmcOptions options)
    : problem_(problem), options_(options), ledger_(problem.grid().level_count()) {}

MlmcEstimator::Sample MlmcEstimator::coupled_sample(const std::vector<LevelVector>& controls, int l,
                                                    std::uint64_t seed, const StreamId& id) const {
  const RngStream stream(seed, id);
  FieldSample field;
  if (options_.coupling == Coupling::top_level) {
    field = problem_.draw_field(problem_.grid().finest_level(), stream);
    while (field.level > l) field = restrict_field(field, field.level - 1);
  } else {
    field = problem_.draw_field(l, stream);
  }
  SampleEval fine = problem_.evaluate(controls[l], field, true);
  Sample s{fine.misfit, std::move(fine.q)};
  if (l > 0) {
    const SampleEval coarse = problem_.evaluate(controls[l - 1], restrict_field(field, l - 1), true);
    s.dmisfit -= coarse.misfit;
    axpy(-1.0, problem_.grid().prolong(coarse.q), s.y);
  }
  return s;
}

std::vector<std::vector<MlmcEstimator::Sample>> MlmcEstimator::run_samples(const LevelVector& u_k,
                                                                          const MgoptSampleSets& sets,
                                                                          int k) const {
  const auto& grid = problem_.grid();
  std::vector<LevelVector> controls(k + 1);
  controls[k] = u_k;
  for (int l = k - 1; l >= 0; --l) controls[l] = grid.restrict(controls[l + 1]);

  std::vector<std::vector<Sample>> samples(k + 1);
  std::vector<std::pair<int, long>> work;
  for (int l = 0; l <= k; ++l) {
    samples[l].resize(sets.count(k, l));
    for (long i = 0; i < sets.count(k, l); ++i) work.emplace_back(l, i);
  }
  parallel_for(work.size(), options_.workers, [&](std::size_t w) {
    const auto [l, i] = work[w];
    samples[l][i] = coupled_sample(controls, l, sets.seed, sets.stream(k, l, i));
  });
  for (int l = 0; l <= k; ++l) {
    ledger_.add(l, sets.count(k, l));
    if (l > 0) ledger_.add(l - 1, sets.count(k, l));
  }
  return samples;
}

GradientEstimate MlmcEstimator::reduce(const std::vector<std::vector<Sample>>& samples,
                                       const LevelVector& u_k, int j,
                                       const MgoptSampleSets& sets) const {
  const auto& grid = problem_.grid();
  const LevelVector u_j = grid.restrict_to(u_k, j);
  GradientEstimate g;
  g.level = j;
  g.set_seed = sets.seed;
  g.value = grid.zeros(j, u_k.role);
  LevelStats& st = g.stats;
  const CostModel cost{problem_.cost_exponent(), sets.K};
  st.kappa = cost.kappa;
  for (int l = 0; l <= j; ++l) {
    const long n = sets.count(j, l);
    if (n > static_cast<long>(samples[l].size()))
      throw InsufficientSamples("prefix estimate needs more samples than were evaluated");
    LevelVector mean = grid.zeros(l, u_k.role);
    double dm = 0.0;
    for (long i = 0; i < n; ++i) {
      axpy(1.0, samples[l][i].y, mean);
      dm += samples[l][i].dmisfit;
    }
    mean = scaled(1.0 / static_cast<double>(n), mean);
    g.cost_value += dm / static_cast<double>(n);
    const LevelVector mapped = grid.prolong_to(mean, j);
    axpy(1.0, mapped, g.value);

    st.n_used.push_back(n);
    st.C.push_back(cost.sample_cost(l));
    st.mean_norm.push_back(grid.norm(mapped));
    st.extrapolated.push_back(false);
    double v = 0.0;
    if (options_.variance_stats && n > 1) {
      // shifted by the first sample: identical samples give exactly 0
      std::vector<LevelVector> d;
      const LevelVector y0 = grid.prolong_to(samples[l][0].y, j);
      LevelVector dmean = grid.zeros(j, u_k.role);
      for (long i = 0; i < n; ++i) {
        d.push_back(linear_combination(1.0, grid.prolong_to(samples[l][i].y, j), -1.0, y0));
        axpy(1.0, d.back(), dmean);
      }
      dmean = scaled(1.0 / static_cast<double>(n), dmean);
      for (const auto& y : d)
        for (std::size_t p = 0; p < y.size(); ++p) v += (y.values[p] - dmean.values[p]) * (y.values[p] - dmean.values[p]);
      v *= grid.weight(j, u_k.role) / static_cast<double>(n - 1);
    }
    st.V.push_back(v);
  }
  axpy(problem_.alpha(), u_j, g.value);
  g.cost_value += 0.5 * problem_.alpha() * grid.inner_product(u_j, u_j);
  return g;
}

GradientEstimate MlmcEstimator::estimate(const LevelVector& u_k, const MgoptSampleSets& sets) const {
  const int k = u_k.level;
  if (k > sets.K) throw LevelMismatch("control level above the sample sets' finest level");
  return reduce(run_samples(u_k, sets, k), u_k, k, sets);
}

std::vector<GradientEstimate> MlmcEstimator::estimate_all(const LevelVector& u_k,
                                                          const MgoptSampleSets& sets) const {
  const int k = u_k.level;
  if (k > sets.K) throw LevelMismatch("control level above the sample sets' finest level");
  if (!sets.nested && k > 0) throw InsufficientSamples("prefix estimates need nested sample sets");
  const auto samples = run_samples(u_k, sets, k);
  std::vector<GradientEstimate> out;
  for (int j = 0; j <= k; ++j) out.push_back(reduce(samples, u_k, j, sets));
  return out;
}

LevelStats MlmcEstimator::level_stats(const LevelVector& u, const WarmupOptions& warmup,
                                      const CostModel& cost, std::uint64_t seed) const {
  if (warmup.samples < 2) throw InsufficientSamples("warm-up needs at least 2 samples per level");
  const auto& grid = problem_.grid();
  const int L = u.level;
  const int top = L == 0 ? 0 : std::min(L, std::max(1, L - warmup.extrapolate_levels));

  std::vector<LevelVector> controls(L + 1);
  controls[L] = u;
  for (int l = L - 1; l >= 0; --l) controls[l] = grid.restrict(controls[l + 1]);

  const long n = warmup.samples;
  std::vector<std::vector<Sample>> samples(top + 1, std::vector<Sample>(n));
  parallel_for(static_cast<std::size_t>((top + 1) * n), options_.workers, [&](std::size_t w) {
    const int l = static_cast<int>(w / n);
    const long i = static_cast<long>(w % n);
    samples[l][i] = coupled_sample(controls, l, seed, StreamId{L, l, static_cast<std::uint64_t>(i)});
  });
  for (int l = 0; l <= top; ++l) {
    ledger_.add(l, n);
    if (l > 0) ledger_.add(l - 1, n);
  }

  LevelStats st;
  st.kappa = cost.kappa;
  std::vector<int> fit_levels;
  std::vector<double> fit_v, fit_mean;
  for (int l = 0; l <= L; ++l) {
    st.C.push_back(cost.sample_cost(l));
    if (l > top) continue;
    std::vector<LevelVector> mapped;
    LevelVector mean = grid.zeros(L, u.role);
    for (long i = 0; i < n; ++i) {
      mapped.push_back(grid.prolong_to(samples[l][i].y, L));
      axpy(1.0, mapped.back(), mean);
    }
    mean = scaled(1.0 / static_cast<double>(n), mean);
    // deviations from the first sample, so identical samples give exactly 0
    const LevelVector y0 = mapped.front();
    LevelVector dmean = grid.zeros(L, u.role);
    for (const auto& y : mapped) axpy(1.0, linear_combination(1.0, y, -1.0, y0), dmean);
    dmean = scaled(1.0 / static_cast<double>(n), dmean);
    double v = 0.0;
    for (const auto& y : mapped)
      for (std::size_t p = 0; p < y.size(); ++p) {
        const double dev = (y.values[p] - y0.values[p]) - dmean.values[p];
        v += dev * dev;
      }
    v *= grid.weight(L, u.role) / static_cast<double>(n - 1);
    st.V.push_back(v);
    st.mean_norm.push_back(grid.norm(mean));
    st.n_used.push_back(n);
    st.extrapolated.push_back(false);
    if (l >= 1) {
      fit_levels.push_back(l);
      fit_v.push_back(v);
      fit_mean.push_back(st.mean_norm.back());
    }
  }
  const DecayFit fit = fit_decay(fit_levels, fit_v);
  st.phi_fitted = fit.fitted;
  st.phi = fit.fitted ? fit.rate : warmup.phi_fallback;
  const bool use_fit = fit.fitted && fit.rate > 0.0;
  const double rate = use_fit ? fit.rate : warmup.phi_fallback;
  for (int l = top + 1; l <= L; ++l) {
    const double v = use_fit ? std::exp2(fit.intercept - fit.rate * l)
                             : st.V[top] * std::exp2(-rate * (l - top));
    st.V.push_back(v);
    st.mean_norm.push_back(0.0);
    st.n_used.push_back(0);
    st.extrapolated.push_back(true);
  }
  const DecayFit bias = fit_decay(fit_levels, fit_mean);
  if (bias.fitted) st.rho = bias.rate;
  return st;
}

}  // namespace mgmlmc
