#include "mgmlmc/linear_solver.hpp"

#include <cmath>
#include <string>

#include "mgmlmc/errors.hpp"

namespace mgmlmc {
namespace {

double face(double a, double b, FaceMean mean) {
  return mean == FaceMean::arithmetic ? 0.5 * (a + b) : 2.0 * a * b / (a + b);
}

}  // namespace

DiffusionOperator::DiffusionOperator(const FieldSample& k, FaceMean mean)
    : m_(k.nodes_per_axis - 2), h_(1.0 / (k.nodes_per_axis - 1)) {
  if (k.dim != 2) throw LevelMismatch("diffusion operator needs a 2-D field");
  if (m_ < 1) throw LevelMismatch("diffusion operator needs at least one interior node");
  const std::size_t n = size();
  diag_.assign(n, 0.0);
  east_.assign(n, 0.0);
  west_.assign(n, 0.0);
  north_.assign(n, 0.0);
  south_.assign(n, 0.0);
  south_bc_.assign(m_, 0.0);
  const double inv_h2 = 1.0 / (h_ * h_);
  for (int b = 0; b < m_; ++b) {
    for (int a = 0; a < m_; ++a) {
      const std::size_t c = static_cast<std::size_t>(b) * m_ + a;
      const double kc = k.at(a + 1, b + 1);
      const double ke = face(kc, k.at(a + 2, b + 1), mean) * inv_h2;
      const double kw = face(kc, k.at(a, b + 1), mean) * inv_h2;
      const double kn = face(kc, k.at(a + 1, b + 2), mean) * inv_h2;
      const double ks = face(kc, k.at(a + 1, b), mean) * inv_h2;
      diag_[c] = ke + kw + kn + ks;
      east_[c] = a + 1 < m_ ? ke : 0.0;
      west_[c] = a > 0 ? kw : 0.0;
      north_[c] = b + 1 < m_ ? kn : 0.0;
      south_[c] = b > 0 ? ks : 0.0;
      if (b == 0) south_bc_[a] = ks;
    }
  }
}

kernels::Stencil2d DiffusionOperator::stencil() const {
  return kernels::Stencil2d{m_, diag_.data(), east_.data(), west_.data(), north_.data(), south_.data()};
}

void DiffusionOperator::apply(const double* x, double* y) const {
  kernels::active().stencil_apply(stencil(), x, y);
}

SolveStats solve_cg(const DiffusionOperator& op, const std::vector<double>& b, std::vector<double>& x,
                    double tol, int max_iter) {
  const auto& kt = kernels::active();
  const std::size_t n = op.size();
  if (b.size() != n) throw LevelMismatch("right-hand side length does not match the operator");
  x.resize(n, 0.0);
  if (max_iter <= 0) max_iter = 20 * op.m() * op.m() + 100;

  const double bnorm = std::sqrt(kt.dot(b.data(), b.data(), n));
  SolveStats stats;
  if (bnorm == 0.0) {
    x.assign(n, 0.0);
    return stats;
  }
  const auto stencil = op.stencil();
  const auto& diag = op.diag();
  std::vector<double> r(n), z(n), p(n), ap(n);
  kt.stencil_apply(stencil, x.data(), ap.data());
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = kt.dot(r.data(), z.data(), n);
  double rnorm = std::sqrt(kt.dot(r.data(), r.data(), n));
  while (rnorm > tol * bnorm) {
    if (stats.iterations >= max_iter)
      throw LinearSolveFailure("CG did not reach relative residual " + std::to_string(tol) +
                               " in " + std::to_string(max_iter) + " iterations (at " +
                               std::to_string(rnorm / bnorm) + ")");
    kt.stencil_apply(stencil, p.data(), ap.data());
    const double alpha = rz / kt.dot(p.data(), ap.data(), n);
    kt.axpy(alpha, p.data(), x.data(), n);
    kt.axpy(-alpha, ap.data(), r.data(), n);
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    const double rz_new = kt.dot(r.data(), z.data(), n);
    kt.xpay(z.data(), rz_new / rz, p.data(), n);
    rz = rz_new;
    rnorm = std::sqrt(kt.dot(r.data(), r.data(), n));
    ++stats.iterations;
  }
  stats.relative_residual = rnorm / bnorm;
  return stats;
}

}  // namespace mgmlmc
