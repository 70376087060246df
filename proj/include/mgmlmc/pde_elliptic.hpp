#pragma once

#include <functional>
#include <vector>

#include "mgmlmc/linear_solver.hpp"
#include "mgmlmc/problem.hpp"

namespace mgmlmc {

/// Source control for -div(k grad y) = u on (0,1)^2, y = 0 on the
/// boundary, cost 1/2 E|y - z|^2 + alpha/2 |u|^2.
struct LaplaceConfig {
  int coarse_nodes = 17;
  int finest_level = 4;
  double alpha = 1e-6;
  CovarianceSpec covariance{};
  double lin_tol = 1e-10;
  FaceMean face_mean = FaceMean::arithmetic;
  /// Defaults to the indicator of [1/4, 3/4]^2.
  std::function<double(double, double)> target;
};

class LaplaceProblem : public Problem {
 public:
  explicit LaplaceProblem(LaplaceConfig config);

  std::string_view name() const override { return "laplace"; }
  bool quadratic() const override { return true; }
  SampleEval evaluate(const LevelVector& u, const FieldSample& k, bool gradient) const override;
  StateSnapshot state(const LevelVector& u, const FieldSample& k, int time_stride = 1) const override;

  /// Interior state for source f (same layout as the control).
  std::vector<double> solve_state(const std::vector<double>& f, const FieldSample& k) const;
  const std::vector<double>& target(int level) const { return targets_.at(level); }
  const LaplaceConfig& config() const { return config_; }

 private:
  LaplaceConfig config_;
  std::vector<std::vector<double>> targets_;
};

/// Dirichlet boundary control on Gamma = (0,1) x {0}: y = u on Gamma and
/// 0 on the rest of the boundary, cost 1/2 E|k dy/dn - phi|^2_Gamma +
/// alpha/2 |u|^2_Gamma.
struct DtnConfig {
  int coarse_nodes = 9;
  int finest_level = 5;
  double alpha = 1e-6;
  CovarianceSpec covariance = default_covariance();
  double lin_tol = 1e-10;
  FaceMean face_mean = FaceMean::arithmetic;
  /// Defaults to sin(pi x).
  std::function<double(double)> target_flux;

  static CovarianceSpec default_covariance() {
    CovarianceSpec c;
    c.deterministic_region = DeterministicRegion{{0.0, 0.0}, {1.0, 0.25}, 1.0};
    return c;
  }
};

class DtnProblem : public Problem {
 public:
  explicit DtnProblem(DtnConfig config);

  std::string_view name() const override { return "dtn"; }
  bool quadratic() const override { return true; }
  SampleEval evaluate(const LevelVector& u, const FieldSample& k, bool gradient) const override;
  StateSnapshot state(const LevelVector& u, const FieldSample& k, int time_stride = 1) const override;

  std::vector<double> solve_state(const std::vector<double>& u_gamma, const FieldSample& k) const;
  /// Outward flux k dy/dn on the Gamma nodes, one-sided second order.
  std::vector<double> flux(const std::vector<double>& u_gamma, const std::vector<double>& y,
                           const FieldSample& k) const;
  const std::vector<double>& target(int level) const { return targets_.at(level); }
  const DtnConfig& config() const { return config_; }

 private:
  DtnConfig config_;
  std::vector<std::vector<double>> targets_;
};

}  // namespace mgmlmc
