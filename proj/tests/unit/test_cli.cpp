#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "experiment.hpp"
#include "json.hpp"
#include "mgmlmc/errors.hpp"

using namespace mgmlmc;
using namespace mgmlmc::cli;
namespace fs = std::filesystem;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return load_config(in);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mgmlmc_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// drops the last CSV column
std::string without_last_column(const std::string& line) { return line.substr(0, line.rfind(',')); }

const char* tiny_laplace = R"(
; tiny Laplace instance
[problem]
name = laplace
coarse_nodes = 9
K = 1

[optimizer]
tau = 5e-3
eps1 = 0.1
warmup_samples = 20

[run]
mode = mgopt
seed = 4
)";

}  // namespace

TEST_CASE("config defaults and overrides") {
  auto c = parse("[problem]\nname = laplace\n");
  CHECK(c.problem.coarse_nodes == 17);
  CHECK(c.problem.K == 2);
  CHECK(c.problem.alpha == 1e-6);
  CHECK(c.problem.covariance.sigma2 == 0.1);
  CHECK(c.problem.covariance.lambda == 0.3);
  CHECK(c.optimizer.r == 0.5);
  CHECK(c.optimizer.eps1 == 0.1);
  CHECK(c.run.mode == Mode::mgopt);
  CHECK(c.optimizer.mgopt.schedule.nu == SmoothingSchedule::standard(2).nu);

  c = parse(tiny_laplace);
  CHECK(c.problem.coarse_nodes == 9);
  CHECK(c.problem.K == 1);
  CHECK(c.optimizer.K == 1);
  CHECK(c.optimizer.tau == 5e-3);
  CHECK(c.optimizer.warmup.samples == 20);
  CHECK(c.run.seed == 4);
  CHECK(c.optimizer.seed == 4);

  c = parse("[problem]\nname = burgers\n");
  CHECK(c.problem.s == -1.0);
  CHECK(c.problem.time_points > 1);

  c = parse("# hash comment\n[problem]\nname = dtn   ; inline\ncoarse_nodes = 9 # inline\n");
  CHECK(c.problem.name == "dtn");
  CHECK(c.problem.coarse_nodes == 9);

  c = parse("[problem]\nK = 2\n[optimizer]\nnu = 0,2,0\nmu = 0,3,1\n[run]\ncoupling = top_level\n");
  CHECK(c.optimizer.mgopt.schedule.nu == std::vector<int>{0, 2, 0});
  CHECK(c.optimizer.mgopt.schedule.mu == std::vector<int>{0, 3, 1});
  CHECK(c.run.coupling == Coupling::top_level);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse("[problem]\nnodes = 9\n"), ConfigError);
  CHECK_THROWS_AS(parse("[solver]\ntol = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[problem]\nname = heat\n"), ConfigError);
  CHECK_THROWS_AS(parse("[problem]\ncoarse_nodes = 8\n"), ConfigError);
  CHECK_THROWS_AS(parse("[problem]\nalpha = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[problem]\nsigma2 = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse("[optimizer]\ntau = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse("[optimizer]\nr = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse("[optimizer]\nq = 0.6\n"), InvalidQ);
  CHECK_THROWS_AS(parse("[problem]\nK = 2\n[optimizer]\nnu = 0,1\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nmode = fly\n"), ConfigError);
  CHECK_THROWS_AS(parse("[run]\nseed = -3\n"), ConfigError);
  CHECK_THROWS_AS(load_config(fs::path("/nonexistent/config.ini")), ConfigError);
}

TEST_CASE("mode names round trip") {
  for (auto m : {Mode::mgopt, Mode::baseline, Mode::gradcheck, Mode::mlmc_report, Mode::field_sample})
    CHECK(parse_mode(mode_name(m)) == m);
  CHECK_THROWS_AS(parse_mode("plot"), ConfigError);
}

TEST_CASE("seed override from the environment") {
  auto c = parse(tiny_laplace);
  ::setenv("MGOPT_SEED", "77", 1);
  apply_environment(c);
  CHECK(c.run.seed == 77);
  CHECK(c.optimizer.seed == 77);
  ::setenv("MGOPT_SEED", "x", 1);
  CHECK_THROWS_AS(apply_environment(c), ConfigError);
  ::unsetenv("MGOPT_SEED");
  apply_environment(c);
  CHECK(c.run.seed == 77);
}

TEST_CASE("gradcheck mode writes its table") {
  auto c = parse(tiny_laplace);
  c.run.mode = Mode::gradcheck;
  c.run.output = scratch_dir("gradcheck");
  c.run.gradcheck_directions = 2;
  std::ostringstream log;
  CHECK(run_experiment(c, log) == 0);
  CHECK(log.str().find("max relative FD error") != std::string::npos);
  const auto rows = lines(c.run.output / "gradcheck.csv");
  CHECK(rows.front() == "k,direction,fd,analytic,rel_error");
  CHECK(rows.size() == 1 + 2 * 2);  // levels k = 0, 1
}

TEST_CASE("field-sample mode writes realizations") {
  auto c = parse("[problem]\nname = laplace\ncoarse_nodes = 9\nK = 1\n[run]\nmode = field-sample\nfield_samples = 3\n");
  c.run.output = scratch_dir("field");
  std::ostringstream log;
  CHECK(run_experiment(c, log) == 0);
  const auto rows = lines(c.run.output / "field.csv");
  CHECK(rows.front() == "sample,x1,x2,value");
  CHECK(rows.size() == 1 + 3 * 17 * 17);
}

TEST_CASE("mlmc-report mode writes level statistics") {
  auto c = parse(tiny_laplace);
  c.run.mode = Mode::mlmc_report;
  c.run.output = scratch_dir("report");
  std::ostringstream log;
  CHECK(run_experiment(c, log) == 0);
  const auto rows = lines(c.run.output / "mlmc_report.csv");
  CHECK(rows.front() == "level,V,C,n,warmup_n,extrapolated,phi,phi_fitted,kappa,rho");
  CHECK(rows.size() == 3);
}

TEST_CASE("optimizer run writes every artifact and reproduces") {
  auto c = parse(tiny_laplace);
  c.run.output = scratch_dir("run_a");
  std::ostringstream log;
  REQUIRE(run_experiment(c, log) == 0);
  const fs::path a = c.run.output;
  for (const char* f : {"report.csv", "control.csv", "mean_state.csv", "var_state.csv", "run.json"})
    CHECK(fs::exists(a / f));

  const auto report = lines(a / "report.csv");
  CHECK(report.front() == "i,eps,n0,n1,J0,J,g0,g,Solves,Time");
  CHECK(report.size() >= 2);
  CHECK(lines(a / "control.csv").front() == "x1,x2,u");
  CHECK(lines(a / "control.csv").size() == 1 + 15 * 15);  // interior nodes
  CHECK(lines(a / "mean_state.csv").front() == "x1,x2,value");
  CHECK(lines(a / "var_state.csv").size() == 1 + 17 * 17);

  std::ifstream js(a / "run.json");
  const auto j = nlohmann::json::parse(js);
  CHECK(j.at("version").get<std::string>().rfind("mgmlmc ", 0) == 0);
  CHECK(j.at("seeds").at("global").get<std::uint64_t>() == 4);
  CHECK(j.at("config").at("problem").at("coarse_nodes").get<int>() == 9);
  CHECK(j.at("result").at("converged").get<bool>());

  c.run.output = scratch_dir("run_b");
  std::ostringstream log2;
  REQUIRE(run_experiment(c, log2) == 0);
  const auto again = lines(c.run.output / "report.csv");
  REQUIRE(again.size() == report.size());
  for (std::size_t i = 0; i < report.size(); ++i) CHECK(without_last_column(again[i]) == without_last_column(report[i]));
}

TEST_CASE("baseline mode") {
  auto c = parse(tiny_laplace);
  c.run.mode = Mode::baseline;
  c.run.output = scratch_dir("baseline");
  std::ostringstream log;
  CHECK(run_experiment(c, log) == 0);
  CHECK(lines(c.run.output / "report.csv").size() >= 2);
  std::ifstream js(c.run.output / "run.json");
  CHECK(nlohmann::json::parse(js).at("result").at("method").get<std::string>() == "baseline");
}
