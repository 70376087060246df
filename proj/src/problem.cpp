#include "mgmlmc/problem.hpp"

#include "mgmlmc/errors.hpp"

namespace mgmlmc {

Problem::Problem(GridHierarchy grid, VectorRole control_role, double alpha, const CovarianceSpec& cov,
                 int field_dim)
    : grid_(grid),
      role_(control_role),
      alpha_(alpha),
      sampler_(field_dim, grid.coarse_nodes(), grid.finest_level(), cov) {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
}

double Problem::cost(const LevelVector& u, const FieldSample& k) const {
  return evaluate(u, k, false).misfit + 0.5 * alpha_ * grid_.inner_product(u, u);
}

LevelVector Problem::gradient(const LevelVector& u, const FieldSample& k) const {
  SampleEval e = evaluate(u, k, true);
  axpy(alpha_, u, e.q);
  return e.q;
}

void Problem::check_control(const LevelVector& u, const FieldSample& k) const {
  if (u.role != role_) throw LevelMismatch("control has the wrong role for this problem");
  if (u.size() != grid_.size(u.level, role_))
    throw LevelMismatch("control length does not match its level");
  if (k.level != u.level || k.nodes_per_axis != grid_.nodes_per_axis(u.level))
    throw LevelMismatch("field sample level " + std::to_string(k.level) +
                        " does not match control level " + std::to_string(u.level));
}

}  // namespace mgmlmc
