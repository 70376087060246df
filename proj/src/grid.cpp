#include "mgmlmc/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mgmlmc/errors.hpp"
#include "mgmlmc/kernels.hpp"

namespace mgmlmc {
namespace {

// 1-D interpolation of m_c interior values to 2 m_c + 1, strided access so
// the same routine serves both axes of the 2-D tensor product.
void prolong_line(const double* c, std::size_t cstride, int mc, double* f, std::size_t fstride) {
  for (int j = 0; j < mc; ++j) f[(2 * j + 1) * fstride] = c[j * cstride];
  for (int j = 0; j <= mc; ++j) {
    const double left = j > 0 ? c[(j - 1) * cstride] : 0.0;
    const double right = j < mc ? c[j * cstride] : 0.0;
    f[2 * j * fstride] = 0.5 * (left + right);
  }
}

void restrict_line(const double* f, std::size_t fstride, int mc, double* c, std::size_t cstride) {
  for (int j = 0; j < mc; ++j)
    c[j * cstride] = 0.25 * (f[2 * j * fstride] + 2.0 * f[(2 * j + 1) * fstride] +
                             f[(2 * j + 2) * fstride]);
}

}  // namespace

GridHierarchy::GridHierarchy(int dim, int coarse_nodes, int finest_level)
    : dim_(dim), coarse_nodes_(coarse_nodes), finest_(finest_level) {
  if (dim != 1 && dim != 2) throw ConfigError("grid dimension must be 1 or 2");
  if (coarse_nodes < 3) throw ConfigError("coarsest grid needs at least 3 nodes per axis");
  if (finest_level < 0) throw ConfigError("finest level must be >= 0");
}

int GridHierarchy::nodes_per_axis(int level) const {
  return (1 << level) * (coarse_nodes_ - 1) + 1;
}

double GridHierarchy::spacing(int level) const { return 1.0 / (nodes_per_axis(level) - 1); }

int GridHierarchy::dim_of(VectorRole role) const {
  return role == VectorRole::boundary_segment ? 1 : dim_;
}

std::size_t GridHierarchy::size(int level, VectorRole role) const {
  const auto m = static_cast<std::size_t>(interior_per_axis(level));
  return dim_of(role) == 2 ? m * m : m;
}

double GridHierarchy::weight(int level, VectorRole role) const {
  return std::pow(spacing(level), dim_of(role));
}

LevelVector GridHierarchy::zeros(int level, VectorRole role) const {
  return LevelVector{level, role, std::vector<double>(size(level, role), 0.0)};
}

LevelVector GridHierarchy::make(int level, VectorRole role, std::vector<double> values) const {
  LevelVector v{level, role, std::move(values)};
  check(v);
  return v;
}

void GridHierarchy::check(const LevelVector& v) const {
  if (v.level < 0 || v.level > finest_)
    throw LevelMismatch("level " + std::to_string(v.level) + " outside hierarchy");
  if (v.values.size() != size(v.level, v.role))
    throw LevelMismatch("vector length " + std::to_string(v.values.size()) +
                        " does not match level " + std::to_string(v.level));
}

double GridHierarchy::inner_product(const LevelVector& a, const LevelVector& b) const {
  check(a);
  check(b);
  if (a.level != b.level || a.role != b.role)
    throw LevelMismatch("inner product of vectors on different levels");
  return weight(a.level, a.role) * kernels::active().dot(a.values.data(), b.values.data(), a.size());
}

double GridHierarchy::norm(const LevelVector& a) const { return std::sqrt(inner_product(a, a)); }

LevelVector GridHierarchy::prolong(const LevelVector& coarse) const {
  check(coarse);
  if (coarse.level >= finest_) throw LevelMismatch("cannot prolong from the finest level");
  const int mc = interior_per_axis(coarse.level);
  const int mf = 2 * mc + 1;
  LevelVector fine = zeros(coarse.level + 1, coarse.role);
  if (dim_of(coarse.role) == 1) {
    prolong_line(coarse.values.data(), 1, mc, fine.values.data(), 1);
    return fine;
  }
  // x1 direction on each coarse row, then x2 direction on each fine column.
  std::vector<double> tmp(static_cast<std::size_t>(mf) * mc);
  for (int j = 0; j < mc; ++j)
    prolong_line(coarse.values.data() + static_cast<std::size_t>(j) * mc, 1, mc,
                 tmp.data() + static_cast<std::size_t>(j) * mf, 1);
  for (int i = 0; i < mf; ++i) prolong_line(tmp.data() + i, mf, mc, fine.values.data() + i, mf);
  return fine;
}

LevelVector GridHierarchy::restrict(const LevelVector& fine) const {
  check(fine);
  if (fine.level <= 0) throw LevelMismatch("cannot restrict from level 0");
  const int mc = interior_per_axis(fine.level - 1);
  const int mf = 2 * mc + 1;
  LevelVector coarse = zeros(fine.level - 1, fine.role);
  if (dim_of(fine.role) == 1) {
    restrict_line(fine.values.data(), 1, mc, coarse.values.data(), 1);
    return coarse;
  }
  std::vector<double> tmp(static_cast<std::size_t>(mf) * mc);
  for (int j = 0; j < mf; ++j)
    restrict_line(fine.values.data() + static_cast<std::size_t>(j) * mf, 1, mc,
                  tmp.data() + static_cast<std::size_t>(j) * mc, 1);
  for (int i = 0; i < mc; ++i) restrict_line(tmp.data() + i, mc, mc, coarse.values.data() + i, mc);
  return coarse;
}

LevelVector GridHierarchy::transfer(const LevelVector& v, int target_level) const {
  check(v);
  if (target_level < 0 || target_level > finest_)
    throw LevelMismatch("transfer target outside hierarchy");
  LevelVector out = v;
  while (out.level < target_level) out = prolong(out);
  while (out.level > target_level) out = restrict(out);
  return out;
}

LevelVector GridHierarchy::prolong_to(const LevelVector& v, int target_level) const {
  if (target_level < v.level) throw LevelMismatch("prolong_to target is coarser");
  return transfer(v, target_level);
}

LevelVector GridHierarchy::restrict_to(const LevelVector& v, int target_level) const {
  if (target_level > v.level) throw LevelMismatch("restrict_to target is finer");
  return transfer(v, target_level);
}

void axpy(double a, const LevelVector& x, LevelVector& y) {
  if (x.level != y.level || x.size() != y.size()) throw LevelMismatch("axpy on mismatched vectors");
  kernels::active().axpy(a, x.values.data(), y.values.data(), x.size());
}

LevelVector linear_combination(double a, const LevelVector& x, double b, const LevelVector& y) {
  if (x.level != y.level || x.size() != y.size())
    throw LevelMismatch("linear combination of mismatched vectors");
  LevelVector out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = a * x.values[i] + b * y.values[i];
  return out;
}

LevelVector scaled(double a, const LevelVector& x) {
  LevelVector out = x;
  for (double& v : out.values) v *= a;
  return out;
}

double max_abs(const LevelVector& x) {
  double m = 0.0;
  for (double v : x.values) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace mgmlmc
