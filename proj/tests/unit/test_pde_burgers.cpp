#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "mgmlmc/errors.hpp"
#include "mgmlmc/kernels.hpp"
#include "mgmlmc/pde_burgers.hpp"

using namespace mgmlmc;
using std::numbers::pi;

namespace {

BurgersConfig desk(int finest = 1) {
  BurgersConfig c;
  c.coarse_nodes = 33;
  c.finest_level = finest;
  c.time_points = 2001;
  return c;
}

LevelVector bump(const GridHierarchy& g, int level, double amp) {
  auto u = g.zeros(level, VectorRole::interior);
  for (std::size_t i = 0; i < u.size(); ++i) {
    double x = g.coordinate(level, static_cast<int>(i));
    u[i] = amp * std::sin(pi * x) * std::sin(pi * x);
  }
  return u;
}

// Final state on all nodes for a constant diffusivity.
std::vector<double> final_state(int nodes, double T, int steps, double k) {
  BurgersConfig c;
  c.coarse_nodes = nodes;
  c.finest_level = 0;
  c.final_time = T;
  c.time_points = steps + 1;
  BurgersProblem p(c);
  auto u = bump(p.grid(), 0, 0.5);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] += 0.2 * std::sin(2 * pi * p.grid().coordinate(0, static_cast<int>(i)));
  auto t = p.solve_forward(u, testutil::constant_field(1, nodes, k));
  const double* y = t.at(t.steps - 1);
  return std::vector<double>(y, y + nodes);
}

double max_diff_coarse(const std::vector<double>& coarse, const std::vector<double>& fine) {
  double d = 0.0;
  for (std::size_t i = 0; i < coarse.size(); ++i) d = std::max(d, std::abs(coarse[i] - fine[2 * i]));
  return d;
}

}  // namespace

TEST_CASE("stability bound") {
  std::vector<double> zero(513, 0.0);
  CHECK(stability_bound(zero, 1e-3, 1.0 / 512) == doctest::Approx(1.907e-3).epsilon(1e-3));
  CHECK(std::isinf(stability_bound(zero, 0.0, 1.0 / 512)));
  std::vector<double> y{0.0, -0.5, 0.25, 0.0};
  CHECK(stability_bound(y, 1e-3, 0.1) == doctest::Approx(0.01 / (0.05 + 2e-3)));
}

TEST_CASE("full-resolution configuration is stable") {
  BurgersConfig c;  // 513 finest nodes, dt = 1e-4
  BurgersProblem p(c);
  REQUIRE(p.grid().nodes_per_axis(4) == 513);
  REQUIRE(p.dt() == doctest::Approx(1e-4));
  std::vector<double> z(513, 0.0);
  for (std::size_t i = 0; i < p.target(4).size(); ++i) z[i + 1] = p.target(4)[i];
  for (int i = 0; i < 20; ++i) {
    auto k = p.draw_field(4, RngStream(8, {4, 4, static_cast<std::uint64_t>(i)}));
    double kmax = *std::max_element(k.values.begin(), k.values.end());
    CHECK(stability_bound(z, kmax, 1.0 / 512) > p.dt());
  }
}

TEST_CASE("single MacCormack step matches a direct transcription") {
  const double y[5] = {0.0, 0.1, 0.2, 0.1, 0.0};
  const double k = 1e-3, s = -1.0, dt = 1e-4, dx = 0.25;
  const double lam = dt / dx, d = k * dt / (dx * dx);
  double yp[5] = {0, 0, 0, 0, 0}, yn[5] = {0, 0, 0, 0, 0};
  for (int i = 1; i < 4; ++i)
    yp[i] = y[i] + lam * (0.5 * s * y[i + 1] * y[i + 1] - 0.5 * s * y[i] * y[i]) + d * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
  for (int i = 1; i < 4; ++i)
    yn[i] = 0.5 * (y[i] + yp[i] - lam * (0.5 * s * yp[i - 1] * yp[i - 1] - 0.5 * s * yp[i] * yp[i]) +
                   d * (yp[i + 1] - 2.0 * yp[i] + yp[i - 1]));

  std::vector<double> diff(5, d);
  kernels::MacCormackArgs args{5, lam, 0.5 * s, diff.data()};
  std::vector<const kernels::Table*> tables{&kernels::scalar_table()};
  if (kernels::avx2_available()) tables.push_back(&kernels::avx2_table());
  for (const auto* t : tables) {
    double pred[5], next[5];
    t->maccormack_step(args, y, pred, next);
    CHECK(std::memcmp(pred, yp, sizeof yp) == 0);
    CHECK(std::memcmp(next, yn, sizeof yn) == 0);
  }

  // through the forward solver: one step of length 1e-4 on 5 nodes
  BurgersConfig c;
  c.coarse_nodes = 5;
  c.finest_level = 0;
  c.final_time = dt;
  c.time_points = 2;
  c.alpha = 1e-6;
  BurgersProblem p(c);
  auto u = p.grid().make(0, VectorRole::interior, {0.1, 0.2, 0.1});
  auto traj = p.solve_forward(u, testutil::constant_field(1, 5, k));
  REQUIRE(traj.steps == 2);
  CHECK(std::memcmp(traj.at(1), yn, sizeof yn) == 0);

  double zp[5], zn[5];
  const double zero[5] = {0, 0, 0, 0, 0};
  kernels::active().maccormack_step(args, zero, zp, zn);
  for (double v : zn) CHECK(v == 0.0);
}

TEST_CASE("MacCormack self-convergence is second order") {
  const double T = 0.125, k = 0.01;
  auto y1 = final_state(33, T, 256, k);
  auto y2 = final_state(65, T, 512, k);
  auto y3 = final_state(129, T, 1024, k);
  auto y4 = final_state(257, T, 2048, k);
  double d1 = max_diff_coarse(y1, y2), d2 = max_diff_coarse(y2, y3), d3 = max_diff_coarse(y3, y4);
  double r1 = std::log2(d1 / d2), r2 = std::log2(d2 / d3);
  MESSAGE("orders " << r1 << " " << r2);
  CHECK(std::abs(r2 - 2.0) <= 0.2);
  CHECK(std::abs(r1 - 2.0) <= 0.2);
}

TEST_CASE("trajectories: zero control and boundary columns") {
  BurgersProblem p(desk());
  auto k = p.draw_field(1, RngStream(1, {1, 1, 0}));
  auto t0 = p.solve_forward(p.zero_control(1), k);
  for (double v : t0.states) CHECK(v == 0.0);
  auto t = p.solve_forward(bump(p.grid(), 1, 0.25), k);
  CHECK(t.steps == 2001);
  for (int n = 0; n < t.steps; ++n) {
    CHECK(t.at(n)[0] == 0.0);
    CHECK(t.at(n)[t.nodes - 1] == 0.0);
  }
}

TEST_CASE("final state norm does not exceed the initial norm") {
  BurgersProblem p(desk());
  const auto& g = p.grid();
  REQUIRE(g.nodes_per_axis(1) == 65);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    auto k = p.draw_field(1, RngStream(2, {1, 1, static_cast<std::uint64_t>(i)}));
    LevelVector u = i == 0 ? bump(g, 1, 0.25) : testutil::random_vector(g, 1, VectorRole::interior, rng, 0.1);
    auto t = p.solve_forward(u, k);
    auto yT = g.make(1, VectorRole::interior, std::vector<double>(t.at(t.steps - 1) + 1, t.at(t.steps - 1) + t.nodes - 1));
    CHECK(g.norm(yT) <= g.norm(u) * (1.0 + 1e-12));
  }
}

TEST_CASE("unstable initial data is reported with its step") {
  BurgersProblem p(desk(0));
  auto u = bump(p.grid(), 0, 1e4);
  try {
    p.solve_forward(u, p.draw_field(0, RngStream(1, {0, 0, 0})));
    FAIL("expected StabilityViolation");
  } catch (const StabilityViolation& e) {
    CHECK(e.step() == 0);
  }
}

TEST_CASE("tangent and adjoint are transposes") {
  BurgersProblem p(desk());
  const auto& g = p.grid();
  std::mt19937_64 rng(12);
  for (int level : {0, 1}) {
    for (int trial = 0; trial < 3; ++trial) {
      auto k = p.draw_field(level, RngStream(5, {level, level, static_cast<std::uint64_t>(trial)}));
      auto u = testutil::random_vector(g, level, VectorRole::interior, rng, 0.1);
      auto du = testutil::random_vector(g, level, VectorRole::interior, rng);
      std::normal_distribution<double> nd;
      std::vector<double> w(du.size());
      for (double& x : w) x = nd(rng);
      auto jd = p.tangent(u, k, du);
      auto aw = p.adjoint(p.solve_forward(u, k), k, w);
      double lhs = 0.0, rhs = 0.0, mag = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        lhs += jd[i] * w[i];
        rhs += du[i] * aw[i];
        mag += std::abs(du[i] * aw[i]);
      }
      CHECK(std::abs(lhs - rhs) <= 1e-10 * mag);
    }
  }
}

TEST_CASE("Burgers gradient matches central differences") {
  BurgersProblem p(desk());
  const auto& g = p.grid();
  std::mt19937_64 rng(21);
  const double eps = 1e-5;
  for (int level : {0, 1}) {
    auto k = p.draw_field(level, RngStream(6, {level, level, 1}));
    auto u = testutil::random_vector(g, level, VectorRole::interior, rng, 0.1);
    auto grad = p.gradient(u, k);
    double worst = 0.0;
    for (int d = 0; d < 5; ++d) {
      auto dir = testutil::unit_direction(g, testutil::random_vector(g, level, VectorRole::interior, rng));
      double fd = (p.cost(linear_combination(1.0, u, eps, dir), k) - p.cost(linear_combination(1.0, u, -eps, dir), k)) /
                  (2 * eps);
      double an = g.inner_product(grad, dir);
      worst = std::max(worst, std::abs(fd - an) / std::abs(an));
    }
    MESSAGE("burgers level " << level << " fd " << worst);
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("matching target gives a zero misfit gradient") {
  BurgersProblem base(desk(0));
  const auto& g = base.grid();
  auto k = base.draw_field(0, RngStream(3, {0, 0, 0}));
  auto u = bump(g, 0, 0.2);
  auto t = base.solve_forward(u, k);
  std::vector<double> yT(t.at(t.steps - 1), t.at(t.steps - 1) + t.nodes);
  const double h = g.spacing(0);
  BurgersConfig c = desk(0);
  c.target = [yT, h](double x) { return yT[static_cast<std::size_t>(std::lround(x / h))]; };
  BurgersProblem p(c);
  auto e = p.evaluate(u, k, true);
  CHECK(e.misfit == 0.0);
  CHECK(max_abs(e.q) == 0.0);
}

TEST_CASE("pure diffusion is linear") {
  BurgersConfig c = desk(0);
  c.s = 0.0;
  BurgersProblem p(c);
  const auto& g = p.grid();
  std::mt19937_64 rng(2);
  auto k = testutil::constant_field(1, g.nodes_per_axis(0), 1e-3);
  auto u1 = testutil::random_vector(g, 0, VectorRole::interior, rng, 0.1);
  auto u2 = testutil::random_vector(g, 0, VectorRole::interior, rng, 0.1);
  auto g12 = p.gradient(linear_combination(1.0, u1, 1.0, u2), k);
  auto g1 = p.gradient(u1, k), g2 = p.gradient(u2, k), g0 = p.gradient(p.zero_control(0), k);
  double defect = 0.0, scale = std::max({max_abs(g12), max_abs(g1), max_abs(g2)});
  for (std::size_t i = 0; i < g12.size(); ++i) defect = std::max(defect, std::abs(g12[i] - g1[i] - g2[i] + g0[i]));
  CHECK(defect <= 1e-10 * scale);
}

TEST_CASE("Burgers cost at zero control") {
  BurgersProblem p(desk());
  for (int l : {0, 1}) {
    auto k = p.draw_field(l, RngStream(1, {l, l, 0}));
    double zz = 0.0;
    for (double z : p.target(l)) zz += z * z;
    CHECK(p.cost(p.zero_control(l), k) == doctest::Approx(0.5 * p.grid().spacing(l) * zz).epsilon(1e-14));
  }
  BurgersConfig c = desk();
  c.target = [](double) { return 0.0; };
  BurgersProblem p0(c);
  CHECK(p0.cost(p0.zero_control(1), p0.draw_field(1, RngStream(1, {1, 1, 0}))) == 0.0);
}
