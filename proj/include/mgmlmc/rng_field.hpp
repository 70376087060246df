#pragma once

#include <complex>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace mgmlmc {

/// Axis-aligned box where the lognormal field is replaced by a constant.
struct DeterministicRegion {
  double lo[2] = {0.0, 0.0};
  double hi[2] = {1.0, 1.0};
  double value = 1.0;

  bool contains(double x1, double x2) const;
};

/// Exponential covariance sigma2 * exp(-|x - x'| / lambda) of the
/// underlying Gaussian field; the lognormal field is scale * exp(z).
struct CovarianceSpec {
  double sigma2 = 0.1;
  double lambda = 0.3;
  double scale = 1.0;
  std::optional<DeterministicRegion> deterministic_region;

  void validate() const;
};

double covariance(std::span<const double> x, std::span<const double> x2, const CovarianceSpec& spec);
/// Same, as a function of the distance.
double covariance_at(double distance, const CovarianceSpec& spec);

/// Identifies one random draw: the MG/OPT level the sample set belongs to,
/// the MLMC level, and the sample index within that set.
struct StreamId {
  int mgopt_level = 0;
  int mlmc_level = 0;
  std::uint64_t sample = 0;

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

/// Reproducible generator for one stream. Identical (global_seed, id) give
/// identical draws; distinct ids key the engine with distinct seed
/// sequences.
class RngStream {
 public:
  RngStream(std::uint64_t global_seed, StreamId id) : seed_(global_seed), id_(id) {}

  std::mt19937_64 engine() const;
  std::uint64_t global_seed() const { return seed_; }
  const StreamId& id() const { return id_; }

 private:
  std::uint64_t seed_;
  StreamId id_;
};

/// Mixes a base seed with tags; used to derive per-cycle and per-purpose
/// seeds from one global seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

struct SeedId {
  std::uint64_t global_seed = 0;
  int level = 0;
  std::uint64_t sample = 0;
};

/// One realization on all nodes (boundary included) of a level grid,
/// row-major with x1 fastest.
struct FieldSample {
  int level = 0;
  int dim = 1;
  int nodes_per_axis = 0;
  std::vector<double> values;
  SeedId seed_id;

  double at(int i, int j = 0) const {
    return values[static_cast<std::size_t>(j) * nodes_per_axis + i];
  }
};

/// FFT-diagonalized circulant embedding of the covariance matrix of a
/// regular grid with nodes_per_axis nodes and spacing h per axis.
class CirculantEmbedding {
 public:
  static constexpr int kInitialPadding = 2;
  static constexpr int kMaxPadding = 8;

  CirculantEmbedding(int dim, int nodes_per_axis, double spacing, const CovarianceSpec& spec,
                     int max_padding = kMaxPadding);
  ~CirculantEmbedding();
  CirculantEmbedding(const CirculantEmbedding&) = delete;
  CirculantEmbedding& operator=(const CirculantEmbedding&) = delete;

  int dim() const { return dim_; }
  int nodes_per_axis() const { return nodes_; }
  /// Embedding size per axis.
  int period() const { return period_; }
  int padding() const { return padding_; }
  /// Eigenvalues after clipping (all >= 0).
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  double min_raw_eigenvalue() const { return min_raw_; }

  /// Mean-zero Gaussian vector on the grid nodes with the target covariance.
  std::vector<double> sample_gaussian(std::mt19937_64& engine) const;

 private:
  struct Plan;

  int dim_;
  int nodes_;
  int period_ = 0;
  int padding_ = 0;
  double min_raw_ = 0.0;
  std::vector<double> eigenvalues_;
  std::vector<double> sqrt_scaled_;  // sqrt(lambda / M^d)
  std::unique_ptr<Plan> plan_;
};

/// scale * exp(z) with z drawn through the embedding, then the
/// deterministic region override.
FieldSample sample_lognormal(const CirculantEmbedding& embedding, const RngStream& stream,
                             const CovarianceSpec& spec, int level);

/// Pointwise injection onto the next coarser nested grid.
FieldSample restrict_field(const FieldSample& fine, int to_level);

/// Embeddings for every level of a hierarchy of node grids.
class FieldSampler {
 public:
  FieldSampler(int dim, int coarse_nodes, int finest_level, CovarianceSpec spec);

  const CovarianceSpec& spec() const { return spec_; }
  int dim() const { return dim_; }
  int nodes_per_axis(int level) const;
  const CirculantEmbedding& embedding(int level) const;
  FieldSample sample(int level, const RngStream& stream) const;

 private:
  int dim_;
  int coarse_nodes_;
  CovarianceSpec spec_;
  std::vector<std::unique_ptr<CirculantEmbedding>> embeddings_;
};

}  // namespace mgmlmc
