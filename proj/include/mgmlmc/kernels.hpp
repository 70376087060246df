#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation and an AVX2 variant; one table is selected at startup
// from the CPU features (override with MGMLMC_KERNELS=scalar|avx2).
//
// The stencil and MacCormack kernels use the same operation order in both
// variants and the build disables floating-point contraction, so they are
// bit-identical across ISAs. Reductions (dot) reassociate and agree only to
// rounding.

#include <cstddef>
#include <string_view>

namespace mgmlmc::kernels {

enum class Isa { scalar, avx2 };

/// Variable-coefficient 5-point operator on an m x m interior grid,
/// row-major with x1 fastest. Face arrays are pre-divided by h^2.
struct Stencil2d {
  int m = 0;
  const double* diag = nullptr;   // m*m
  const double* east = nullptr;   // coefficient to (i+1, j), m*m, zero at i = m-1
  const double* west = nullptr;   // coefficient to (i-1, j), m*m, zero at i = 0
  const double* north = nullptr;  // coefficient to (i, j+1), m*m
  const double* south = nullptr;  // coefficient to (i, j-1), m*m
};

/// One MacCormack step on n nodes including the two zero boundary nodes.
struct MacCormackArgs {
  int n = 0;
  double courant = 0.0;           // dt / dx
  double half_s = 0.0;            // s / 2, flux psi = half_s * y^2
  const double* diffusion = nullptr;  // k_i dt / dx^2, length n
};

struct Table {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  /// y = x + a * y
  void (*xpay)(const double* x, double a, double* y, std::size_t n);
  /// y = A x
  void (*stencil_apply)(const Stencil2d& op, const double* x, double* y);
  /// predictor -> pred, corrector -> next; boundary entries are set to 0.
  void (*maccormack_step)(const MacCormackArgs& args, const double* y, double* pred, double* next);
};

const Table& scalar_table();
/// Throws if the binary was built without AVX2 support.
const Table& avx2_table();
bool avx2_available();

/// Table used by the library. Chosen on first use.
const Table& active();
void select(Isa isa);
std::string_view name(Isa isa);

}  // namespace mgmlmc::kernels
