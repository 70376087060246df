#pragma once

#include <functional>
#include <vector>

#include "mgmlmc/problem.hpp"

namespace mgmlmc {

/// Initial-condition control of y_t = (s/2)(y^2)_x + (k y_x)_x on (0,1),
/// y = 0 at x = 0, 1, y(., 0) = u; cost 1/2 E|y(., T) - z|^2 +
/// alpha/2 |u|^2. The same time grid is used on every level.
struct BurgersConfig {
  int coarse_nodes = 33;
  int finest_level = 4;
  double alpha = 1e-6;
  double s = -1.0;
  double final_time = 1.0;
  int time_points = 10001;
  CovarianceSpec covariance = default_covariance();
  /// Defaults to (1 - cos 5 pi x) / 8 on [2/5, 4/5], 0 elsewhere.
  std::function<double(double)> target;

  static CovarianceSpec default_covariance() {
    CovarianceSpec c;
    c.scale = 1e-3;
    return c;
  }
};

/// Largest stable time step dx^2 / (max|y| dx + 2 max k).
double stability_bound(const std::vector<double>& y, double k_max, double dx);

/// All time levels on all nodes (boundary included), time-major.
struct Trajectory {
  int level = 0;
  int nodes = 0;
  int steps = 0;  // number of stored time levels
  std::vector<double> states;

  const double* at(int n) const { return states.data() + static_cast<std::size_t>(n) * nodes; }
};

class BurgersProblem : public Problem {
 public:
  explicit BurgersProblem(BurgersConfig config);

  std::string_view name() const override { return "burgers"; }
  bool quadratic() const override { return false; }
  double cost_exponent() const override { return 1.0; }
  SampleEval evaluate(const LevelVector& u, const FieldSample& k, bool gradient) const override;
  StateSnapshot state(const LevelVector& u, const FieldSample& k, int time_stride = 1) const override;

  double dt() const { return config_.final_time / (config_.time_points - 1); }
  /// Throws StabilityViolation at the first step whose state breaks the
  /// bound.
  Trajectory solve_forward(const LevelVector& u, const FieldSample& k) const;
  /// Linearized final state d y(T) for perturbation du of u.
  std::vector<double> tangent(const LevelVector& u, const FieldSample& k, const LevelVector& du) const;
  /// Transpose of tangent applied to w (interior final-time values).
  std::vector<double> adjoint(const Trajectory& traj, const FieldSample& k, const std::vector<double>& w) const;
  const std::vector<double>& target(int level) const { return targets_.at(level); }
  const BurgersConfig& config() const { return config_; }

 private:
  std::vector<double> diffusion(const FieldSample& k) const;

  BurgersConfig config_;
  std::vector<std::vector<double>> targets_;
};

}  // namespace mgmlmc
