#include "mgmlmc/pde_elliptic.hpp"

#include <cmath>
#include <numbers>

#include "mgmlmc/errors.hpp"

namespace mgmlmc {
namespace {

StateSnapshot embed_interior(const std::vector<double>& y, int n, const std::vector<double>* bottom) {
  StateSnapshot s{n, n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
  const int m = n - 2;
  for (int b = 0; b < m; ++b)
    for (int a = 0; a < m; ++a)
      s.values[static_cast<std::size_t>(b + 1) * n + a + 1] = y[static_cast<std::size_t>(b) * m + a];
  if (bottom)
    for (int a = 0; a < m; ++a) s.values[a + 1] = (*bottom)[a];
  return s;
}

}  // namespace

LaplaceProblem::LaplaceProblem(LaplaceConfig config)
    : Problem(GridHierarchy(2, config.coarse_nodes, config.finest_level), VectorRole::interior,
              config.alpha, config.covariance, 2),
      config_(std::move(config)) {
  if (!config_.target)
    config_.target = [](double x1, double x2) {
      return x1 >= 0.25 && x1 <= 0.75 && x2 >= 0.25 && x2 <= 0.75 ? 1.0 : 0.0;
    };
  for (int l = 0; l <= grid_.finest_level(); ++l) {
    const int m = grid_.interior_per_axis(l);
    std::vector<double> z(static_cast<std::size_t>(m) * m);
    for (int b = 0; b < m; ++b)
      for (int a = 0; a < m; ++a)
        z[static_cast<std::size_t>(b) * m + a] =
            config_.target(grid_.coordinate(l, a), grid_.coordinate(l, b));
    targets_.push_back(std::move(z));
  }
}

std::vector<double> LaplaceProblem::solve_state(const std::vector<double>& f, const FieldSample& k) const {
  const DiffusionOperator op(k, config_.face_mean);
  std::vector<double> y(op.size(), 0.0);
  solve_cg(op, f, y, config_.lin_tol);
  return y;
}

SampleEval LaplaceProblem::evaluate(const LevelVector& u, const FieldSample& k, bool gradient) const {
  check_control(u, k);
  const DiffusionOperator op(k, config_.face_mean);
  std::vector<double> y(op.size(), 0.0);
  solve_cg(op, u.values, y, config_.lin_tol);
  const auto& z = targets_[u.level];
  std::vector<double> r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] - z[i];
  SampleEval e;
  const double w = grid_.weight(u.level, role_);
  e.misfit = 0.5 * w * kernels::active().dot(r.data(), r.data(), r.size());
  if (gradient) {
    std::vector<double> p(op.size(), 0.0);
    solve_cg(op, r, p, config_.lin_tol);
    e.q = LevelVector{u.level, role_, std::move(p)};
  }
  return e;
}

StateSnapshot LaplaceProblem::state(const LevelVector& u, const FieldSample& k, int) const {
  check_control(u, k);
  return embed_interior(solve_state(u.values, k), k.nodes_per_axis, nullptr);
}

DtnProblem::DtnProblem(DtnConfig config)
    : Problem(GridHierarchy(2, config.coarse_nodes, config.finest_level), VectorRole::boundary_segment,
              config.alpha, config.covariance, 2),
      config_(std::move(config)) {
  if (!config_.target_flux) config_.target_flux = [](double x) { return std::sin(std::numbers::pi * x); };
  for (int l = 0; l <= grid_.finest_level(); ++l) {
    const int m = grid_.interior_per_axis(l);
    std::vector<double> phi(m);
    for (int a = 0; a < m; ++a) phi[a] = config_.target_flux(grid_.coordinate(l, a));
    targets_.push_back(std::move(phi));
  }
}

std::vector<double> DtnProblem::solve_state(const std::vector<double>& u_gamma, const FieldSample& k) const {
  const DiffusionOperator op(k, config_.face_mean);
  const auto& bc = op.south_boundary();
  std::vector<double> rhs(op.size(), 0.0);
  for (int a = 0; a < op.m(); ++a) rhs[a] = bc[a] * u_gamma[a];
  std::vector<double> y(op.size(), 0.0);
  solve_cg(op, rhs, y, config_.lin_tol);
  return y;
}

std::vector<double> DtnProblem::flux(const std::vector<double>& u_gamma, const std::vector<double>& y,
                                     const FieldSample& k) const {
  const int m = k.nodes_per_axis - 2;
  const double h = 1.0 / (k.nodes_per_axis - 1);
  std::vector<double> f(m);
  for (int a = 0; a < m; ++a) {
    const double y1 = y[a];
    const double y2 = m > 1 ? y[static_cast<std::size_t>(m) + a] : 0.0;
    f[a] = k.at(a + 1, 0) * (3.0 * u_gamma[a] - 4.0 * y1 + y2) / (2.0 * h);
  }
  return f;
}

SampleEval DtnProblem::evaluate(const LevelVector& u, const FieldSample& k, bool gradient) const {
  check_control(u, k);
  const DiffusionOperator op(k, config_.face_mean);
  const int m = op.m();
  const double h = op.spacing();
  const auto& bc = op.south_boundary();
  std::vector<double> rhs(op.size(), 0.0);
  for (int a = 0; a < m; ++a) rhs[a] = bc[a] * u.values[a];
  std::vector<double> y(op.size(), 0.0);
  solve_cg(op, rhs, y, config_.lin_tol);

  std::vector<double> r = flux(u.values, y, k);
  const auto& phi = targets_[u.level];
  for (int a = 0; a < m; ++a) r[a] -= phi[a];
  SampleEval e;
  e.misfit = 0.5 * h * kernels::active().dot(r.data(), r.data(), r.size());
  if (!gradient) return e;

  // Transpose of u -> (y, flux): w = D_k r / (2h) enters directly with
  // weight 3 and through the state rows 1 and 2 with weights -4 and 1.
  std::vector<double> w(m), rhs_adj(op.size(), 0.0);
  for (int a = 0; a < m; ++a) {
    w[a] = k.at(a + 1, 0) * r[a] / (2.0 * h);
    rhs_adj[a] = -4.0 * w[a];
    if (m > 1) rhs_adj[static_cast<std::size_t>(m) + a] = w[a];
  }
  std::vector<double> p(op.size(), 0.0);
  solve_cg(op, rhs_adj, p, config_.lin_tol);
  std::vector<double> q(m);
  for (int a = 0; a < m; ++a) q[a] = 3.0 * w[a] + bc[a] * p[a];
  e.q = LevelVector{u.level, role_, std::move(q)};
  return e;
}

StateSnapshot DtnProblem::state(const LevelVector& u, const FieldSample& k, int) const {
  check_control(u, k);
  return embed_interior(solve_state(u.values, k), k.nodes_per_axis, &u.values);
}

}  // namespace mgmlmc
