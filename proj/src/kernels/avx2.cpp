#include "mgmlmc/kernels.hpp"

#include <stdexcept>

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#define MGMLMC_HAVE_AVX2 1
#include <immintrin.h>
#endif

namespace mgmlmc::kernels {

#ifdef MGMLMC_HAVE_AVX2
namespace {

#define MGMLMC_AVX2 __attribute__((target("avx2")))

MGMLMC_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1,
                         _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

MGMLMC_AVX2 void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i),
                                          _mm256_mul_pd(va, _mm256_loadu_pd(x + i))));
  for (; i < n; ++i) y[i] += a * x[i];
}

MGMLMC_AVX2 void xpay_avx2(const double* x, double a, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(x + i),
                                          _mm256_mul_pd(va, _mm256_loadu_pd(y + i))));
  for (; i < n; ++i) y[i] = x[i] + a * y[i];
}

inline double stencil_point(const Stencil2d& op, const double* x, int m, int i, int j) {
  const std::size_t c = static_cast<std::size_t>(j) * m + i;
  const double xw = i > 0 ? x[c - 1] : 0.0;
  const double xe = i + 1 < m ? x[c + 1] : 0.0;
  const double xs = j > 0 ? x[c - m] : 0.0;
  const double xn = j + 1 < m ? x[c + m] : 0.0;
  return op.diag[c] * x[c] - op.west[c] * xw - op.east[c] * xe - op.south[c] * xs -
         op.north[c] * xn;
}

MGMLMC_AVX2 void stencil_apply_avx2(const Stencil2d& op, const double* x, double* y) {
  const int m = op.m;
  const __m256d zero = _mm256_setzero_pd();
  for (int j = 0; j < m; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * m;
    if (m > 0) y[row] = stencil_point(op, x, m, 0, j);
    int i = 1;
    for (; i + 4 <= m - 1; i += 4) {
      const std::size_t c = row + i;
      const __m256d xc = _mm256_loadu_pd(x + c);
      const __m256d xw = _mm256_loadu_pd(x + c - 1);
      const __m256d xe = _mm256_loadu_pd(x + c + 1);
      const __m256d xs = j > 0 ? _mm256_loadu_pd(x + c - m) : zero;
      const __m256d xn = j + 1 < m ? _mm256_loadu_pd(x + c + m) : zero;
      __m256d t = _mm256_mul_pd(_mm256_loadu_pd(op.diag + c), xc);
      t = _mm256_sub_pd(t, _mm256_mul_pd(_mm256_loadu_pd(op.west + c), xw));
      t = _mm256_sub_pd(t, _mm256_mul_pd(_mm256_loadu_pd(op.east + c), xe));
      t = _mm256_sub_pd(t, _mm256_mul_pd(_mm256_loadu_pd(op.south + c), xs));
      t = _mm256_sub_pd(t, _mm256_mul_pd(_mm256_loadu_pd(op.north + c), xn));
      _mm256_storeu_pd(y + c, t);
    }
    for (; i < m; ++i) y[row + i] = stencil_point(op, x, m, i, j);
  }
}

MGMLMC_AVX2 void maccormack_avx2(const MacCormackArgs& a, const double* y, double* pred,
                                 double* next) {
  const int n = a.n;
  const __m256d hs = _mm256_set1_pd(a.half_s);
  const __m256d cour = _mm256_set1_pd(a.courant);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d half = _mm256_set1_pd(0.5);

  pred[0] = 0.0;
  pred[n - 1] = 0.0;
  int i = 1;
  for (; i + 4 <= n - 1; i += 4) {
    const __m256d yc = _mm256_loadu_pd(y + i);
    const __m256d ye = _mm256_loadu_pd(y + i + 1);
    const __m256d yw = _mm256_loadu_pd(y + i - 1);
    const __m256d psi_c = _mm256_mul_pd(_mm256_mul_pd(hs, yc), yc);
    const __m256d psi_e = _mm256_mul_pd(_mm256_mul_pd(hs, ye), ye);
    const __m256d lap = _mm256_add_pd(_mm256_sub_pd(ye, _mm256_mul_pd(two, yc)), yw);
    __m256d t = _mm256_add_pd(yc, _mm256_mul_pd(cour, _mm256_sub_pd(psi_e, psi_c)));
    t = _mm256_add_pd(t, _mm256_mul_pd(_mm256_loadu_pd(a.diffusion + i), lap));
    _mm256_storeu_pd(pred + i, t);
  }
  for (; i < n - 1; ++i) {
    const double psi_c = a.half_s * y[i] * y[i];
    const double psi_e = a.half_s * y[i + 1] * y[i + 1];
    pred[i] = y[i] + a.courant * (psi_e - psi_c) +
              a.diffusion[i] * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
  }

  next[0] = 0.0;
  next[n - 1] = 0.0;
  i = 1;
  for (; i + 4 <= n - 1; i += 4) {
    const __m256d pc = _mm256_loadu_pd(pred + i);
    const __m256d pe = _mm256_loadu_pd(pred + i + 1);
    const __m256d pw = _mm256_loadu_pd(pred + i - 1);
    const __m256d psi_c = _mm256_mul_pd(_mm256_mul_pd(hs, pc), pc);
    const __m256d psi_w = _mm256_mul_pd(_mm256_mul_pd(hs, pw), pw);
    const __m256d lap = _mm256_add_pd(_mm256_sub_pd(pe, _mm256_mul_pd(two, pc)), pw);
    __m256d t = _mm256_add_pd(_mm256_loadu_pd(y + i), pc);
    t = _mm256_sub_pd(t, _mm256_mul_pd(cour, _mm256_sub_pd(psi_w, psi_c)));
    t = _mm256_add_pd(t, _mm256_mul_pd(_mm256_loadu_pd(a.diffusion + i), lap));
    _mm256_storeu_pd(next + i, _mm256_mul_pd(half, t));
  }
  for (; i < n - 1; ++i) {
    const double psi_c = a.half_s * pred[i] * pred[i];
    const double psi_w = a.half_s * pred[i - 1] * pred[i - 1];
    next[i] = 0.5 * (y[i] + pred[i] - a.courant * (psi_w - psi_c) +
                     a.diffusion[i] * (pred[i + 1] - 2.0 * pred[i] + pred[i - 1]));
  }
}

}  // namespace

bool avx2_available() {
  static const bool ok = __builtin_cpu_supports("avx2");
  return ok;
}

const Table& avx2_table() {
  if (!avx2_available()) throw std::runtime_error("AVX2 kernels requested on a CPU without AVX2");
  static const Table t{Isa::avx2,        dot_avx2,       axpy_avx2, xpay_avx2,
                       stencil_apply_avx2, maccormack_avx2};
  return t;
}

#else

bool avx2_available() { return false; }

const Table& avx2_table() {
  throw std::runtime_error("this build has no AVX2 kernels");
}

#endif

}  // namespace mgmlmc::kernels
