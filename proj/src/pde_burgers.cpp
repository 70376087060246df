#include "mgmlmc/pde_burgers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mgmlmc/errors.hpp"
#include "mgmlmc/kernels.hpp"

namespace mgmlmc {

double stability_bound(const std::vector<double>& y, double k_max, double dx) {
  double y_max = 0.0;
  for (double v : y) y_max = std::max(y_max, std::abs(v));
  const double denom = y_max * dx + 2.0 * k_max;
  return denom > 0.0 ? dx * dx / denom : std::numeric_limits<double>::infinity();
}

BurgersProblem::BurgersProblem(BurgersConfig config)
    : Problem(GridHierarchy(1, config.coarse_nodes, config.finest_level), VectorRole::interior,
              config.alpha, config.covariance, 1),
      config_(std::move(config)) {
  if (config_.time_points < 2) throw ConfigError("Burgers needs at least 2 time points");
  if (!(config_.final_time > 0.0)) throw ConfigError("final time must be > 0");
  if (!config_.target)
    config_.target = [](double x) {
      return x >= 0.4 && x <= 0.8 ? 0.125 * (1.0 - std::cos(5.0 * std::numbers::pi * x)) : 0.0;
    };
  for (int l = 0; l <= grid_.finest_level(); ++l) {
    const int m = grid_.interior_per_axis(l);
    std::vector<double> z(m);
    for (int a = 0; a < m; ++a) z[a] = config_.target(grid_.coordinate(l, a));
    targets_.push_back(std::move(z));
  }
}

std::vector<double> BurgersProblem::diffusion(const FieldSample& k) const {
  const double dx = 1.0 / (k.nodes_per_axis - 1);
  std::vector<double> b(k.values.size());
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = k.values[i] * dt() / (dx * dx);
  return b;
}

Trajectory BurgersProblem::solve_forward(const LevelVector& u, const FieldSample& k) const {
  check_control(u, k);
  const int n = k.nodes_per_axis;
  const double dx = 1.0 / (n - 1);
  const double k_max = *std::max_element(k.values.begin(), k.values.end());
  const std::vector<double> b = diffusion(k);
  const kernels::MacCormackArgs args{n, dt() / dx, 0.5 * config_.s, b.data()};
  const auto& kt = kernels::active();

  Trajectory t;
  t.level = u.level;
  t.nodes = n;
  t.steps = config_.time_points;
  t.states.assign(static_cast<std::size_t>(t.steps) * n, 0.0);
  std::copy(u.values.begin(), u.values.end(), t.states.begin() + 1);
  std::vector<double> pred(n), cur(n);
  for (int step = 0; step + 1 < t.steps; ++step) {
    const double* y = t.at(step);
    cur.assign(y, y + n);
    const double bound = stability_bound(cur, k_max, dx);
    if (dt() > bound) throw StabilityViolation(step, dt(), bound);
    kt.maccormack_step(args, y, pred.data(), t.states.data() + static_cast<std::size_t>(step + 1) * n);
  }
  return t;
}

std::vector<double> BurgersProblem::tangent(const LevelVector& u, const FieldSample& k,
                                            const LevelVector& du) const {
  const Trajectory t = solve_forward(u, k);
  const int n = t.nodes;
  const double dx = 1.0 / (n - 1);
  const double a = dt() / dx;
  const double s = config_.s;
  const std::vector<double> b = diffusion(k);
  const kernels::MacCormackArgs args{n, a, 0.5 * s, b.data()};
  std::vector<double> dy(n, 0.0), dp(n, 0.0), dn(n, 0.0), pred(n), next(n);
  std::copy(du.values.begin(), du.values.end(), dy.begin() + 1);
  for (int step = 0; step + 1 < t.steps; ++step) {
    const double* y = t.at(step);
    kernels::active().maccormack_step(args, y, pred.data(), next.data());
    for (int i = 1; i < n - 1; ++i)
      dp[i] = dy[i] + a * s * (y[i + 1] * dy[i + 1] - y[i] * dy[i]) +
              b[i] * (dy[i + 1] - 2.0 * dy[i] + dy[i - 1]);
    for (int i = 1; i < n - 1; ++i)
      dn[i] = 0.5 * (dy[i] + dp[i] + a * s * (pred[i] * dp[i] - pred[i - 1] * dp[i - 1]) +
                     b[i] * (dp[i + 1] - 2.0 * dp[i] + dp[i - 1]));
    std::swap(dy, dn);
  }
  return std::vector<double>(dy.begin() + 1, dy.end() - 1);
}

std::vector<double> BurgersProblem::adjoint(const Trajectory& t, const FieldSample& k,
                                            const std::vector<double>& w) const {
  const int n = t.nodes;
  const double dx = 1.0 / (n - 1);
  const double a = dt() / dx;
  const double s = config_.s;
  const std::vector<double> b = diffusion(k);
  const kernels::MacCormackArgs args{n, a, 0.5 * s, b.data()};
  std::vector<double> lam(n, 0.0), ct(n, 0.0), pt(n, 0.0), pred(n), next(n);
  std::copy(w.begin(), w.end(), lam.begin() + 1);
  for (int step = t.steps - 2; step >= 0; --step) {
    const double* y = t.at(step);
    kernels::active().maccormack_step(args, y, pred.data(), next.data());
    // C^T lam with C about the predictor, then P^T about y; entries on the
    // boundary nodes stay zero.
    for (int j = 1; j < n - 1; ++j)
      ct[j] = lam[j] + a * s * pred[j] * (lam[j] - lam[j + 1]) + b[j - 1] * lam[j - 1] -
              2.0 * b[j] * lam[j] + b[j + 1] * lam[j + 1];
    for (int j = 1; j < n - 1; ++j)
      pt[j] = ct[j] - a * s * y[j] * (ct[j] - ct[j - 1]) + b[j - 1] * ct[j - 1] -
              2.0 * b[j] * ct[j] + b[j + 1] * ct[j + 1];
    for (int j = 1; j < n - 1; ++j) lam[j] = 0.5 * (lam[j] + pt[j]);
  }
  return std::vector<double>(lam.begin() + 1, lam.end() - 1);
}

SampleEval BurgersProblem::evaluate(const LevelVector& u, const FieldSample& k, bool gradient) const {
  const Trajectory t = solve_forward(u, k);
  const double* yT = t.at(t.steps - 1);
  const auto& z = targets_[u.level];
  std::vector<double> r(z.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = yT[i + 1] - z[i];
  SampleEval e;
  e.misfit = 0.5 * grid_.weight(u.level, role_) * kernels::active().dot(r.data(), r.data(), r.size());
  if (gradient) e.q = LevelVector{u.level, role_, adjoint(t, k, r)};
  return e;
}

StateSnapshot BurgersProblem::state(const LevelVector& u, const FieldSample& k, int time_stride) const {
  const Trajectory t = solve_forward(u, k);
  time_stride = std::max(1, time_stride);
  StateSnapshot s;
  s.cols = t.nodes;
  for (int step = 0; step < t.steps; step += time_stride) {
    s.values.insert(s.values.end(), t.at(step), t.at(step) + t.nodes);
    ++s.rows;
  }
  if ((t.steps - 1) % time_stride != 0) {
    s.values.insert(s.values.end(), t.at(t.steps - 1), t.at(t.steps - 1) + t.nodes);
    ++s.rows;
  }
  return s;
}

}  // namespace mgmlmc
