#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "mgmlmc/grid.hpp"
#include "mgmlmc/rng_field.hpp"

namespace testutil {

inline mgmlmc::FieldSample constant_field(int dim, int nodes, double value, int level = 0) {
  mgmlmc::FieldSample k;
  k.level = level;
  k.dim = dim;
  k.nodes_per_axis = nodes;
  std::size_t size = dim == 2 ? static_cast<std::size_t>(nodes) * nodes : nodes;
  k.values.assign(size, value);
  return k;
}

inline mgmlmc::LevelVector random_vector(const mgmlmc::GridHierarchy& g, int level, mgmlmc::VectorRole role,
                                         std::mt19937_64& rng, double amplitude = 1.0) {
  std::normal_distribution<double> n(0.0, amplitude);
  mgmlmc::LevelVector v = g.zeros(level, role);
  for (double& x : v.values) x = n(rng);
  return v;
}

inline mgmlmc::LevelVector unit_direction(const mgmlmc::GridHierarchy& g, mgmlmc::LevelVector d) {
  double nrm = g.norm(d);
  for (double& x : d.values) x /= nrm;
  return d;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); }

}  // namespace testutil
