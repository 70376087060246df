#include "mgmlmc/rng_field.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <string>

#include "mgmlmc/errors.hpp"

namespace mgmlmc {
namespace {

// FFTW's planner is not thread-safe; execution with new-array calls is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double kRegionTol = 1e-12;

}  // namespace

bool DeterministicRegion::contains(double x1, double x2) const {
  return x1 >= lo[0] - kRegionTol && x1 <= hi[0] + kRegionTol && x2 >= lo[1] - kRegionTol &&
         x2 <= hi[1] + kRegionTol;
}

void CovarianceSpec::validate() const {
  if (!(sigma2 >= 0.0)) throw ConfigError("sigma2 must be >= 0");
  if (!(lambda > 0.0)) throw ConfigError("correlation length must be > 0");
  if (!(scale > 0.0)) throw ConfigError("field scale must be > 0");
  if (deterministic_region) {
    const auto& r = *deterministic_region;
    for (int a = 0; a < 2; ++a)
      if (r.lo[a] < 0.0 || r.hi[a] > 1.0 || r.lo[a] > r.hi[a])
        throw ConfigError("deterministic region must lie inside the unit domain");
    if (!(r.value > 0.0)) throw ConfigError("deterministic region value must be > 0");
  }
}

double covariance_at(double distance, const CovarianceSpec& spec) {
  return spec.sigma2 * std::exp(-distance / spec.lambda);
}

double covariance(std::span<const double> x, std::span<const double> x2, const CovarianceSpec& spec) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - x2[i]) * (x[i] - x2[i]);
  return covariance_at(std::sqrt(d2), spec);
}

std::mt19937_64 RngStream::engine() const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(id_.mgopt_level),
                    static_cast<std::uint32_t>(id_.mlmc_level),
                    static_cast<std::uint32_t>(id_.sample),
                    static_cast<std::uint32_t>(id_.sample >> 32)};
  return std::mt19937_64(seq);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

struct CirculantEmbedding::Plan {
  fftw_plan forward = nullptr;
  ~Plan() {
    if (forward) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(forward);
    }
  }
};

CirculantEmbedding::CirculantEmbedding(int dim, int nodes_per_axis, double spacing,
                                       const CovarianceSpec& spec, int max_padding)
    : dim_(dim), nodes_(nodes_per_axis), plan_(std::make_unique<Plan>()) {
  if (dim != 1 && dim != 2) throw ConfigError("field dimension must be 1 or 2");
  if (nodes_per_axis < 2) throw ConfigError("field grid needs at least 2 nodes per axis");
  spec.validate();

  for (int pad = kInitialPadding; pad <= max_padding; pad *= 2) {
    const int period = pad * (nodes_per_axis - 1);
    const std::size_t total =
        dim == 2 ? static_cast<std::size_t>(period) * period : static_cast<std::size_t>(period);
    std::vector<std::complex<double>> row(total), eig(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
      const int i = static_cast<int>(idx % period);
      const int j = dim == 2 ? static_cast<int>(idx / period) : 0;
      const double di = std::min(i, period - i) * spacing;
      const double dj = std::min(j, period - j) * spacing;
      row[idx] = covariance_at(std::sqrt(di * di + dj * dj), spec);
    }

    fftw_plan plan;
    {
      std::lock_guard lock(planner_mutex());
      auto* in = reinterpret_cast<fftw_complex*>(row.data());
      auto* out = reinterpret_cast<fftw_complex*>(eig.data());
      plan = dim == 2 ? fftw_plan_dft_2d(period, period, in, out, FFTW_FORWARD,
                                         FFTW_ESTIMATE | FFTW_UNALIGNED)
                      : fftw_plan_dft_1d(period, in, out, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    fftw_execute(plan);

    double max_eig = 0.0, min_eig = 0.0;
    for (const auto& e : eig) {
      max_eig = std::max(max_eig, e.real());
      min_eig = std::min(min_eig, e.real());
    }
    const double tol = 1e-12 * max_eig;
    if (min_eig >= -tol) {
      period_ = period;
      padding_ = pad;
      min_raw_ = min_eig;
      plan_->forward = plan;
      eigenvalues_.resize(total);
      sqrt_scaled_.resize(total);
      for (std::size_t idx = 0; idx < total; ++idx) {
        eigenvalues_[idx] = std::max(0.0, eig[idx].real());
        sqrt_scaled_[idx] = std::sqrt(eigenvalues_[idx] / static_cast<double>(total));
      }
      return;
    }
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  throw EmbeddingNotPSD("circulant embedding has negative eigenvalues up to padding factor " +
                        std::to_string(max_padding));
}

CirculantEmbedding::~CirculantEmbedding() = default;

std::vector<double> CirculantEmbedding::sample_gaussian(std::mt19937_64& engine) const {
  const std::size_t total = sqrt_scaled_.size();
  std::vector<std::complex<double>> xi(total), w(total);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const double re = normal(engine);
    const double im = normal(engine);
    xi[idx] = std::complex<double>(re, im) * sqrt_scaled_[idx];
  }
  fftw_execute_dft(plan_->forward, reinterpret_cast<fftw_complex*>(xi.data()),
                   reinterpret_cast<fftw_complex*>(w.data()));
  // The real part of w has exactly the embedded covariance.
  const std::size_t n = static_cast<std::size_t>(nodes_);
  std::vector<double> z(dim_ == 2 ? n * n : n);
  for (std::size_t j = 0; j < (dim_ == 2 ? n : 1); ++j)
    for (std::size_t i = 0; i < n; ++i) z[j * n + i] = w[j * period_ + i].real();
  return z;
}

FieldSample sample_lognormal(const CirculantEmbedding& embedding, const RngStream& stream,
                             const CovarianceSpec& spec, int level) {
  auto engine = stream.engine();
  std::vector<double> z = embedding.sample_gaussian(engine);
  FieldSample f;
  f.level = level;
  f.dim = embedding.dim();
  f.nodes_per_axis = embedding.nodes_per_axis();
  f.seed_id = SeedId{stream.global_seed(), level, stream.id().sample};
  f.values.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) f.values[i] = spec.scale * std::exp(z[i]);
  if (spec.deterministic_region) {
    const int n = f.nodes_per_axis;
    const double h = 1.0 / (n - 1);
    const auto& region = *spec.deterministic_region;
    for (int j = 0; j < (f.dim == 2 ? n : 1); ++j)
      for (int i = 0; i < n; ++i)
        if (region.contains(i * h, f.dim == 2 ? j * h : 0.0))
          f.values[static_cast<std::size_t>(j) * n + i] = region.value;
  }
  return f;
}

FieldSample restrict_field(const FieldSample& fine, int to_level) {
  if (to_level != fine.level - 1 || (fine.nodes_per_axis - 1) % 2 != 0)
    throw LevelMismatch("field restriction must target the next coarser nested level");
  FieldSample coarse;
  coarse.level = to_level;
  coarse.dim = fine.dim;
  coarse.nodes_per_axis = (fine.nodes_per_axis - 1) / 2 + 1;
  coarse.seed_id = fine.seed_id;
  const int nc = coarse.nodes_per_axis;
  const int nf = fine.nodes_per_axis;
  coarse.values.resize(fine.dim == 2 ? static_cast<std::size_t>(nc) * nc : nc);
  for (int j = 0; j < (fine.dim == 2 ? nc : 1); ++j)
    for (int i = 0; i < nc; ++i)
      coarse.values[static_cast<std::size_t>(j) * nc + i] =
          fine.values[static_cast<std::size_t>(2 * j) * nf + 2 * i];
  return coarse;
}

FieldSampler::FieldSampler(int dim, int coarse_nodes, int finest_level, CovarianceSpec spec)
    : dim_(dim), coarse_nodes_(coarse_nodes), spec_(std::move(spec)) {
  spec_.validate();
  for (int l = 0; l <= finest_level; ++l) {
    const int n = nodes_per_axis(l);
    embeddings_.push_back(std::make_unique<CirculantEmbedding>(dim, n, 1.0 / (n - 1), spec_));
  }
}

int FieldSampler::nodes_per_axis(int level) const { return (1 << level) * (coarse_nodes_ - 1) + 1; }

const CirculantEmbedding& FieldSampler::embedding(int level) const {
  if (level < 0 || level >= static_cast<int>(embeddings_.size()))
    throw LevelMismatch("no field embedding for level " + std::to_string(level));
  return *embeddings_[level];
}

FieldSample FieldSampler::sample(int level, const RngStream& stream) const {
  return sample_lognormal(embedding(level), stream, spec_, level);
}

}  // namespace mgmlmc
