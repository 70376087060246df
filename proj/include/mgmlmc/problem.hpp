#pragma once

#include <string_view>
#include <vector>

#include "mgmlmc/grid.hpp"
#include "mgmlmc/rng_field.hpp"

namespace mgmlmc {

/// Per-sample data term and its gradient (w.r.t. the level inner product)
/// for one coefficient realization. The full per-sample cost is
/// misfit + alpha/2 |u|^2 and the full per-sample gradient alpha u + q.
struct SampleEval {
  double misfit = 0.0;
  LevelVector q;  // empty unless requested
};

/// State on all nodes of a level (boundary included), rows x cols,
/// row-major. For time-dependent problems rows are stored time steps.
struct StateSnapshot {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
};

/// A robust control problem: deterministic control, lognormal random
/// coefficient, tracking-type cost. Implementations are stateless after
/// construction and safe to evaluate concurrently.
class Problem {
 public:
  Problem(GridHierarchy grid, VectorRole control_role, double alpha, const CovarianceSpec& cov,
          int field_dim);
  virtual ~Problem() = default;

  virtual std::string_view name() const = 0;
  /// True when the reduced cost is quadratic in u for a fixed sample.
  virtual bool quadratic() const = 0;
  /// Cost growth exponent kappa of one sample, C_l ~ 2^(kappa l).
  virtual double cost_exponent() const { return grid_.dim(); }

  virtual SampleEval evaluate(const LevelVector& u, const FieldSample& k, bool gradient) const = 0;
  virtual StateSnapshot state(const LevelVector& u, const FieldSample& k, int time_stride = 1) const = 0;

  const GridHierarchy& grid() const { return grid_; }
  VectorRole control_role() const { return role_; }
  double alpha() const { return alpha_; }
  const FieldSampler& sampler() const { return sampler_; }

  LevelVector zero_control(int level) const { return grid_.zeros(level, role_); }
  FieldSample draw_field(int level, const RngStream& stream) const {
    return sampler_.sample(level, stream);
  }
  /// Full per-sample cost and gradient.
  double cost(const LevelVector& u, const FieldSample& k) const;
  LevelVector gradient(const LevelVector& u, const FieldSample& k) const;

 protected:
  void check_control(const LevelVector& u, const FieldSample& k) const;

  GridHierarchy grid_;
  VectorRole role_;
  double alpha_;
  FieldSampler sampler_;
};

}  // namespace mgmlmc
