#include "mgmlmc/kernels.hpp"

namespace mgmlmc::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void xpay_scalar(const double* x, double a, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + a * y[i];
}

void stencil_apply_scalar(const Stencil2d& op, const double* x, double* y) {
  const int m = op.m;
  for (int j = 0; j < m; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * m;
    for (int i = 0; i < m; ++i) {
      const std::size_t c = row + i;
      const double xw = i > 0 ? x[c - 1] : 0.0;
      const double xe = i + 1 < m ? x[c + 1] : 0.0;
      const double xs = j > 0 ? x[c - m] : 0.0;
      const double xn = j + 1 < m ? x[c + m] : 0.0;
      y[c] = op.diag[c] * x[c] - op.west[c] * xw - op.east[c] * xe - op.south[c] * xs -
             op.north[c] * xn;
    }
  }
}

void maccormack_scalar(const MacCormackArgs& a, const double* y, double* pred, double* next) {
  const int n = a.n;
  pred[0] = 0.0;
  pred[n - 1] = 0.0;
  for (int i = 1; i < n - 1; ++i) {
    const double psi_c = a.half_s * y[i] * y[i];
    const double psi_e = a.half_s * y[i + 1] * y[i + 1];
    pred[i] = y[i] + a.courant * (psi_e - psi_c) +
              a.diffusion[i] * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
  }
  next[0] = 0.0;
  next[n - 1] = 0.0;
  for (int i = 1; i < n - 1; ++i) {
    const double psi_c = a.half_s * pred[i] * pred[i];
    const double psi_w = a.half_s * pred[i - 1] * pred[i - 1];
    next[i] = 0.5 * (y[i] + pred[i] - a.courant * (psi_w - psi_c) +
                     a.diffusion[i] * (pred[i + 1] - 2.0 * pred[i] + pred[i - 1]));
  }
}

}  // namespace

const Table& scalar_table() {
  static const Table t{Isa::scalar,        dot_scalar,       axpy_scalar, xpay_scalar,
                       stencil_apply_scalar, maccormack_scalar};
  return t;
}

}  // namespace mgmlmc::kernels
