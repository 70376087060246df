#include <cmath>
#include <cstring>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "mgmlmc/errors.hpp"
#include "mgmlmc/pde_elliptic.hpp"
#include "mgmlmc/rng_field.hpp"

using namespace mgmlmc;

TEST_CASE("exponential covariance values") {
  CovarianceSpec spec;  // sigma2 0.1, lambda 0.3
  const double a[2] = {0.2, 0.4};
  CHECK(covariance(a, a, spec) == doctest::Approx(0.1).epsilon(1e-15));
  const double b[2] = {0.2 + 0.3 * 0.6, 0.4 + 0.3 * 0.8};
  CHECK(covariance(a, b, spec) == doctest::Approx(0.1 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(covariance_at(0.3, spec) == doctest::Approx(0.0367879).epsilon(1e-6));
  double prev = covariance_at(0.0, spec);
  for (double d = 0.5; d < 200.0; d *= 2) {
    double c = covariance_at(d, spec);
    CHECK(c < prev);
    prev = c;
  }
  CHECK(covariance_at(1e3, spec) < 1e-300);
}

TEST_CASE("covariance spec validation") {
  CovarianceSpec s;
  s.sigma2 = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.lambda = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.scale = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.deterministic_region = DeterministicRegion{{0.0, 0.0}, {1.5, 0.25}, 1.0};
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("zero variance gives a constant field") {
  CovarianceSpec spec;
  spec.sigma2 = 0.0;
  spec.scale = 2.5;
  CirculantEmbedding emb(2, 9, 1.0 / 8, spec);
  for (double e : emb.eigenvalues()) CHECK(e == 0.0);
  auto eng = RngStream(1, {0, 0, 0}).engine();
  for (double z : emb.sample_gaussian(eng)) CHECK(z == 0.0);
  auto f = sample_lognormal(emb, RngStream(1, {0, 0, 3}), spec, 0);
  for (double v : f.values) CHECK(v == 2.5);
}

TEST_CASE("two-point embedding reproduces the dense covariance") {
  CovarianceSpec spec;
  spec.lambda = 1e3;
  const double h = 1.0;
  CirculantEmbedding emb(1, 2, h, spec);
  for (double e : emb.eigenvalues()) CHECK(e >= 0.0);
  // dense oracle: Cholesky of the 2x2 covariance, then L L^T
  const double c00 = covariance_at(0.0, spec), c01 = covariance_at(h, spec);
  const double l00 = std::sqrt(c00), l10 = c01 / l00, l11 = std::sqrt(c00 - l10 * l10);
  const double d00 = l00 * l00, d01 = l10 * l00, d11 = l10 * l10 + l11 * l11;
  CHECK(d01 == doctest::Approx(0.1).epsilon(1e-3));  // nearly all-ones times sigma2
  const int M = emb.period();
  auto implied = [&](int d) {
    double s = 0.0;
    for (int j = 0; j < M; ++j) s += emb.eigenvalues()[j] * std::cos(2.0 * std::numbers::pi * j * d / M);
    return s / M;
  };
  CHECK(std::abs(implied(0) - d00) <= 1e-12);
  CHECK(std::abs(implied(0) - d11) <= 1e-12);
  CHECK(std::abs(implied(1) - d01) <= 1e-12);
}

TEST_CASE("padding is reported") {
  CovarianceSpec spec;
  CirculantEmbedding emb(1, 33, 1.0 / 32, spec);
  CHECK(emb.padding() >= CirculantEmbedding::kInitialPadding);
  CHECK(emb.period() == emb.padding() * 32);
  CHECK(emb.min_raw_eigenvalue() >= -1e-12 * 1e3);
}

TEST_CASE("sampling is deterministic per stream") {
  FieldSampler s(2, 9, 2, CovarianceSpec{});
  auto a = s.sample(2, RngStream(42, {1, 2, 17}));
  auto b = s.sample(2, RngStream(42, {1, 2, 17}));
  REQUIRE(a.values.size() == b.values.size());
  CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
  auto c = s.sample(2, RngStream(42, {1, 2, 18}));
  auto d = s.sample(2, RngStream(43, {1, 2, 17}));
  auto e = s.sample(2, RngStream(42, {0, 2, 17}));
  CHECK(a.values != c.values);
  CHECK(a.values != d.values);
  CHECK(a.values != e.values);
  for (double v : a.values) CHECK(v > 0.0);
  CHECK(a.seed_id.global_seed == 42);
  CHECK(a.seed_id.level == 2);
  CHECK(a.seed_id.sample == 17);
}

TEST_CASE("log-field mean is zero") {
  CovarianceSpec spec;
  spec.scale = 1e-3;
  FieldSampler s(1, 33, 0, spec);
  const int n = 10000;
  const int nodes[] = {0, 7, 16, 32};
  double sum[4] = {0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    auto f = s.sample(0, RngStream(5, {0, 0, static_cast<std::uint64_t>(i)}));
    for (int j = 0; j < 4; ++j) sum[j] += std::log(f.values[nodes[j]] / spec.scale);
  }
  const double bound = 4.0 * std::sqrt(spec.sigma2) / std::sqrt(double(n));
  for (double x : sum) CHECK(std::abs(x / n) <= bound);
}

TEST_CASE("deterministic region override") {
  CovarianceSpec spec = DtnConfig::default_covariance();
  FieldSampler s(2, 9, 1, spec);
  auto f = s.sample(1, RngStream(3, {0, 1, 0}));
  const int N = f.nodes_per_axis;
  const double h = 1.0 / (N - 1);
  int inside = 0;
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      double v = f.at(i, j);
      CHECK(v > 0.0);
      if (j * h <= 0.25) {
        CHECK(v == 1.0);
        ++inside;
      }
    }
  CHECK(inside == N * 5);
}

TEST_CASE("restriction by injection") {
  FieldSample f;
  f.level = 1;
  f.dim = 1;
  f.nodes_per_axis = 5;
  f.values = {1.5, 2.5, 3.5, 4.5, 5.5};
  f.seed_id = {9, 1, 4};
  auto c = restrict_field(f, 0);
  CHECK(c.values == std::vector<double>{1.5, 3.5, 5.5});
  CHECK(c.level == 0);
  CHECK(c.nodes_per_axis == 3);
  CHECK(c.seed_id.global_seed == 9);
  CHECK(c.seed_id.sample == 4);
  CHECK_THROWS_AS(restrict_field(f, 1), LevelMismatch);
  CHECK_THROWS_AS(restrict_field(f, -1), LevelMismatch);

  auto k = testutil::constant_field(2, 9, 0.7, 1);
  auto kc = restrict_field(k, 0);
  CHECK(kc.nodes_per_axis == 5);
  for (double v : kc.values) CHECK(v == 0.7);

  FieldSampler s(2, 5, 1, CovarianceSpec{});
  auto fine = s.sample(1, RngStream(1, {0, 1, 2}));
  auto coarse = restrict_field(fine, 0);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) CHECK(coarse.at(i, j) == fine.at(2 * i, 2 * j));
}

TEST_CASE("coupled level pair is strongly correlated") {
  LaplaceConfig cfg;
  cfg.finest_level = 2;
  LaplaceProblem p(cfg);
  const auto& g = p.grid();
  auto u2 = g.make(2, VectorRole::interior, std::vector<double>(g.size(2, VectorRole::interior), 1.0));
  auto u1 = g.restrict(u2);
  auto ones1 = g.make(1, VectorRole::interior, std::vector<double>(g.size(1, VectorRole::interior), 1.0));
  const int n = 200;
  std::vector<double> a(n), b(n);
  for (int i = 0; i < n; ++i) {
    auto k2 = p.draw_field(2, RngStream(11, {2, 2, static_cast<std::uint64_t>(i)}));
    auto k1 = restrict_field(k2, 1);
    a[i] = g.inner_product(g.prolong(ones1), p.gradient(u2, k2));
    b[i] = g.inner_product(ones1, p.gradient(u1, k1));
  }
  double ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  double corr = sab / std::sqrt(saa * sbb);
  MESSAGE("coupled correlation " << corr);
  CHECK(corr > 0.9);
}
