#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mgmlmc {

/// Which node set a level vector lives on. Domain vectors hold the interior
/// nodes of (0,1)^d; boundary-segment vectors hold the interior nodes of the
/// control edge Gamma = (0,1) x {0} and always use 1-D transfers.
enum class VectorRole { interior, boundary_segment };

struct LevelVector {
  int level = 0;
  VectorRole role = VectorRole::interior;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

/// Nested uniform grids on the unit cube. Level l has
/// 2^l (n0 - 1) + 1 nodes per axis including the two boundary nodes, so
/// the spacing halves from one level to the next. Dirichlet boundary values
/// are zero for every vector handled here, so only interior nodes are stored.
class GridHierarchy {
 public:
  GridHierarchy(int dim, int coarse_nodes, int finest_level);

  int dim() const { return dim_; }
  int finest_level() const { return finest_; }
  int level_count() const { return finest_ + 1; }
  int coarse_nodes() const { return coarse_nodes_; }

  int nodes_per_axis(int level) const;
  int interior_per_axis(int level) const { return nodes_per_axis(level) - 2; }
  double spacing(int level) const;

  int dim_of(VectorRole role) const;
  std::size_t size(int level, VectorRole role) const;
  /// Quadrature weight h^d of the level inner product.
  double weight(int level, VectorRole role) const;

  LevelVector zeros(int level, VectorRole role) const;
  LevelVector make(int level, VectorRole role, std::vector<double> values) const;

  double inner_product(const LevelVector& a, const LevelVector& b) const;
  double norm(const LevelVector& a) const;

  /// Linear/bilinear interpolation one level up.
  LevelVector prolong(const LevelVector& coarse) const;
  /// Exact adjoint of prolong under the weighted inner products
  /// (full weighting).
  LevelVector restrict(const LevelVector& fine) const;
  /// Composition of single-level maps; identity when target == v.level.
  LevelVector transfer(const LevelVector& v, int target_level) const;
  LevelVector prolong_to(const LevelVector& v, int target_level) const;
  LevelVector restrict_to(const LevelVector& v, int target_level) const;

  /// Interior node coordinate along one axis.
  double coordinate(int level, int interior_index) const {
    return (interior_index + 1) * spacing(level);
  }

 private:
  void check(const LevelVector& v) const;

  int dim_;
  int coarse_nodes_;
  int finest_;
};

// Dense vector helpers on level vectors (same level and role required).
void axpy(double a, const LevelVector& x, LevelVector& y);
LevelVector linear_combination(double a, const LevelVector& x, double b, const LevelVector& y);
LevelVector scaled(double a, const LevelVector& x);
double max_abs(const LevelVector& x);

}  // namespace mgmlmc
