#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "mgmlmc/errors.hpp"
#include "mgmlmc/mgopt.hpp"
#include "mgmlmc/pde_elliptic.hpp"

using namespace mgmlmc;

namespace {

LaplaceProblem small_laplace(double lin_tol = 1e-10, int coarse = 9, int K = 2) {
  LaplaceConfig c;
  c.coarse_nodes = coarse;
  c.finest_level = K;
  c.lin_tol = lin_tol;
  return LaplaceProblem(c);
}

MgoptSampleSets sets_for(int K, std::vector<long> nK, std::uint64_t seed, double q = 0.25) {
  SampleAllocation a;
  a.n = std::move(nK);
  return build_sample_sets(K, a, q, true, seed);
}

MgoptOptions options_for(int K) {
  MgoptOptions o;
  o.schedule = SmoothingSchedule::standard(K);
  return o;
}

}  // namespace

TEST_CASE("standard smoothing schedule") {
  auto s2 = SmoothingSchedule::standard(2);
  CHECK(s2.nu == std::vector<int>{0, 1, 0});
  CHECK(s2.mu == std::vector<int>{0, 2, 1});
  auto s3 = SmoothingSchedule::standard(3);
  CHECK(s3.nu == std::vector<int>{0, 2, 1, 0});
  CHECK(s3.mu == std::vector<int>{0, 4, 2, 1});
  CHECK(s3.coarsest_steps == 8);
  CHECK_NOTHROW(s3.validate(3));
  CHECK_THROWS_AS(s3.validate(2), ConfigError);
  s3.nu[1] = -1;
  CHECK_THROWS_AS(s3.validate(3), ConfigError);
}

TEST_CASE("zero smoothing steps leave the point unchanged") {
  auto p = small_laplace();
  MlmcEstimator est(p);
  auto sets = sets_for(2, {4, 2, 1}, 1);
  LevelObjective obj(est, sets, 2, p.zero_control(2), false);
  std::mt19937_64 rng(1);
  auto v = testutil::random_vector(p.grid(), 2, VectorRole::interior, rng);
  auto e = obj.evaluate(v);
  auto r = ncg_smooth(obj, e, 0, true, NcgOptions{});
  CHECK(r.steps == 0);
  CHECK(r.evaluations == 0);
  CHECK(r.last.v.values == v.values);
  CHECK(r.last.J == e.J);
}

TEST_CASE("shifted objective") {
  auto p = small_laplace();
  MlmcEstimator est(p);
  auto sets = sets_for(2, {4, 2, 1}, 2);
  std::mt19937_64 rng(2);
  auto tau = testutil::random_vector(p.grid(), 1, VectorRole::interior, rng);
  auto v = testutil::random_vector(p.grid(), 1, VectorRole::interior, rng);
  LevelObjective shifted(est, sets, 1, tau, false), plain(est, sets, 1, p.zero_control(1), false);
  auto a = shifted.evaluate(v), b = plain.evaluate(v);
  CHECK(a.J == doctest::Approx(b.J - p.grid().inner_product(tau, v)).epsilon(1e-14));
  for (std::size_t i = 0; i < a.g.size(); ++i) CHECK(a.g[i] == doctest::Approx(b.g[i] - tau[i]).epsilon(1e-14));
  CHECK_THROWS_AS(LevelObjective(est, sets, 2, tau, false), LevelMismatch);
}

TEST_CASE("coarse-correction line search") {
  auto p = small_laplace(1e-13);
  MlmcEstimator est(p);
  auto sets = sets_for(2, {4, 2, 1}, 3);
  LevelObjective obj(est, sets, 2, p.zero_control(2), false);
  const auto& g = p.grid();
  std::mt19937_64 rng(3);
  auto v = testutil::random_vector(g, 2, VectorRole::interior, rng);
  auto e = obj.evaluate(v);

  SUBCASE("zero direction") {
    auto r = coarse_correction_linesearch(obj, e, g.zeros(2, VectorRole::interior));
    CHECK(r.step == 1.0);
    CHECK(r.evaluations == 0);
    CHECK(r.eval.J == e.J);
    CHECK_FALSE(r.warning);
  }
  SUBCASE("ascent direction exhausts the backtracks") {
    auto r = coarse_correction_linesearch(obj, e, e.g, 30);
    CHECK(r.step == 0.0);
    CHECK(r.warning);
    CHECK(r.backtracks == 30);
    CHECK(r.evaluations == 31);
    CHECK(r.eval.v.values == v.values);
  }
  SUBCASE("unit step accepted near the optimum without extra work") {
    auto sm = ncg_smooth(obj, e, 60, true, NcgOptions{});
    auto near = obj.evaluate(linear_combination(1.0, sm.last.v, 1e-3, testutil::unit_direction(g, e.g)));
    auto d = linear_combination(1.0, sm.last.v, -1.0, near.v);
    auto r = coarse_correction_linesearch(obj, near, d);
    CHECK(r.step == 1.0);
    CHECK(r.backtracks == 0);
    CHECK(r.evaluations == 1);
    CHECK(r.eval.J < near.J);
  }
}

TEST_CASE("NCG iterates equal classical CG on the sampled quadratic") {
  auto p = small_laplace(1e-13, 17, 1);
  MlmcEstimator est(p);
  auto sets = sets_for(1, {6, 2}, 4);
  LevelObjective obj(est, sets, 1, p.zero_control(1), false);
  const auto& g = p.grid();
  auto v0 = p.zero_control(1);
  auto e0 = obj.evaluate(v0);

  // CG oracle on H v = b with H x = g(x) - g(0), weighted inner product
  std::vector<LevelVector> cg;
  auto x = v0;
  auto r = scaled(-1.0, e0.g);
  auto d = r;
  for (int j = 0; j < 10; ++j) {
    auto Hd = linear_combination(1.0, obj.evaluate(d).g, -1.0, e0.g);
    double rr = g.inner_product(r, r);
    double a = rr / g.inner_product(d, Hd);
    axpy(a, d, x);
    axpy(-a, Hd, r);
    double beta = g.inner_product(r, r) / rr;
    d = linear_combination(1.0, r, beta, d);
    cg.push_back(x);
  }

  for (bool affine : {false, true}) {
    NcgOptions o;
    o.affine_gradient = affine;
    auto res = ncg_smooth(obj, e0, 10, true, o);
    REQUIRE(res.iterates.size() == 10);
    // rounding in H d decorrelates any two CG recurrences after about six
    // steps at this conditioning, and the affine gradient recursion drifts
    // like a CG residual update; compare on the horizon where they agree
    const int horizon = affine ? 4 : 6;
    for (int j = 0; j < horizon; ++j) {
      double diff = g.norm(linear_combination(1.0, res.iterates[j], -1.0, cg[j]));
      INFO("affine " << affine << " j " << j);
      CHECK(diff <= 1e-8 * g.norm(cg[j]));
    }
    for (const auto& s : res.trace) CHECK(s.quadratic_step);
    if (affine)
      CHECK(res.evaluations == 10);
    else
      CHECK(res.evaluations <= 20);
  }
}

TEST_CASE("Dai-Yuan denominators under exact line search") {
  auto p = small_laplace(1e-13, 17, 1);
  MlmcEstimator est(p);
  auto sets = sets_for(1, {6, 2}, 5);
  LevelObjective obj(est, sets, 1, p.zero_control(1), false);
  auto res = ncg_smooth(obj, obj.evaluate(p.zero_control(1)), 8, true, NcgOptions{});
  REQUIRE(res.dy_denominators.size() == 7);
  for (std::size_t j = 0; j < res.dy_denominators.size(); ++j) {
    CHECK(res.dy_denominators[j] > 0.0);
    CHECK(std::abs(res.dy_orthogonality[j]) <= 1e-8 * res.dy_denominators[j]);
  }
  for (std::size_t j = 1; j < res.trace.size(); ++j) CHECK(res.trace[j].J <= res.trace[j - 1].J);
}

TEST_CASE("V-cycles: coherence, descent and monotonicity over 20 cycles") {
  auto p = small_laplace();
  MlmcEstimator est(p);
  auto opts = options_for(2);
  opts.verify_coherence = true;
  std::mt19937_64 rng(6);
  auto v = testutil::random_vector(p.grid(), 2, VectorRole::interior, rng);
  int descents_checked = 0;
  for (int c = 0; c < 20; ++c) {
    auto sets = sets_for(2, {16, 4, 2}, 100 + c);
    MgOpt mg(est, sets, opts);
    auto r = mg.vcycle(v);
    CHECK(r.trace.coherence.size() == 2);
    for (const auto& h : r.trace.coherence) {
      CHECK(h.relative <= 1e-10);
      CHECK(h.reevaluated <= 1e-10);
    }
    for (const auto& d : r.trace.descent)
      if (d.coarse_decreased) {
        CHECK(d.directional < 0.0);
        ++descents_checked;
      }
    CHECK(r.final.J <= r.start.J);
    v = r.final.v;
  }
  CHECK(descents_checked > 0);
}

TEST_CASE("minimizer of the sampled problem is a fixed point") {
  // small MLMC sets can make the sampled objective indefinite; this one is convex
  auto p = small_laplace(1e-13, 17, 1);
  MlmcEstimator est(p);
  auto sets = sets_for(1, {6, 2}, 4);
  const auto& g = p.grid();
  LevelObjective obj(est, sets, 1, p.zero_control(1), false);
  auto e = obj.evaluate(p.zero_control(1));
  for (int round = 0; round < 10 && g.norm(e.g) > 1e-14; ++round) {
    auto res = ncg_smooth(obj, e, 100, true, NcgOptions{});
    e = res.last;
    if (res.stalled) break;
  }
  REQUIRE(g.norm(e.g) <= 1e-10);
  MgOpt mg(est, sets, options_for(1));
  auto r = mg.vcycle(e.v);
  double moved = g.norm(linear_combination(1.0, r.final.v, -1.0, e.v));
  MESSAGE("moved " << moved << " |g| " << g.norm(e.g));
  CHECK(moved <= 1e-9 * g.norm(e.v));
  for (const auto& d : r.trace.descent) CHECK(d.d_norm <= 1e-9 * g.norm(e.v));
}

TEST_CASE("evaluation accounting and the nested-prefix shortcut") {
  auto p = small_laplace();
  const auto& g = p.grid();
  auto sets = sets_for(1, {12, 4}, 8);
  std::mt19937_64 rng(9);
  auto v = testutil::random_vector(g, 1, VectorRole::interior, rng);

  auto run = [&](bool reuse, MlmcEstimator& est) {
    auto o = options_for(1);
    o.reuse_prefixes = reuse;
    return MgOpt(est, sets, o).vcycle(v);
  };
  MlmcEstimator plain(p), reuse(p);
  auto a = run(false, plain);
  auto b = run(true, reuse);

  // recover evaluations per level from the solve ledger
  auto evals = [&](const MlmcEstimator& est) {
    const auto& c = est.ledger().counts();
    long e1 = c[1] / sets.count(1, 1);
    long e0 = (c[0] - e1 * (sets.count(1, 0) + sets.count(1, 1))) / sets.count(0, 0);
    CHECK(e1 * sets.count(1, 1) == c[1]);
    return e0 + e1;
  };
  CHECK(evals(plain) == a.trace.evaluations);
  CHECK(evals(reuse) == b.trace.evaluations);
  CHECK(b.trace.evaluations == a.trace.evaluations - 1);
  CHECK(reuse.ledger().total() < plain.ledger().total());
  double diff = g.norm(linear_combination(1.0, a.final.v, -1.0, b.final.v));
  CHECK(diff <= 1e-12 * g.norm(a.final.v));

  // two evaluations per quadratic smoothing step at most
  int steps = static_cast<int>(a.trace.steps.size());
  CHECK(a.trace.evaluations <= 2 * steps + 3);
}
