#pragma once

#include <vector>

#include "mgmlmc/kernels.hpp"
#include "mgmlmc/rng_field.hpp"

namespace mgmlmc {

enum class FaceMean { arithmetic, harmonic };

/// -div(k grad y) on the interior nodes of an N x N grid with spacing h,
/// 5-point scheme, face coefficients from the node values of k. Boundary
/// neighbours are eliminated; their couplings stay in diag.
class DiffusionOperator {
 public:
  DiffusionOperator(const FieldSample& k, FaceMean mean = FaceMean::arithmetic);

  int m() const { return m_; }
  double spacing() const { return h_; }
  std::size_t size() const { return static_cast<std::size_t>(m_) * m_; }
  kernels::Stencil2d stencil() const;
  /// Coefficient k_{i,1/2} / h^2 coupling interior row 0 to boundary node
  /// (i+1, 0).
  const std::vector<double>& south_boundary() const { return south_bc_; }
  const std::vector<double>& diag() const { return diag_; }

  void apply(const double* x, double* y) const;

 private:
  int m_;
  double h_;
  std::vector<double> diag_, east_, west_, north_, south_, south_bc_;
};

struct SolveStats {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients; x holds the initial guess
/// on entry. Throws LinearSolveFailure if the relative residual does not
/// reach tol within max_iter iterations.
SolveStats solve_cg(const DiffusionOperator& op, const std::vector<double>& b, std::vector<double>& x,
                    double tol, int max_iter = 0);

}  // namespace mgmlmc
