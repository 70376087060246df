#include "experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mgmlmc/errors.hpp"
#include "mgmlmc/kernels.hpp"

#ifndef MGMLMC_VERSION
#define MGMLMC_VERSION "0.0.0"
#endif
#ifndef MGMLMC_GIT_DESCRIBE
#define MGMLMC_GIT_DESCRIBE "unknown"
#endif

namespace mgmlmc::cli {
namespace {

namespace pt = boost::property_tree;
using nlohmann::json;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"problem",
       {"name", "coarse_nodes", "K", "alpha", "sigma2", "lambda", "scale", "deterministic_region", "lin_tol",
        "face_mean", "s", "final_time", "time_points"}},
      {"optimizer",
       {"tau", "r", "eps1", "i_max", "q", "theta", "nested", "warmup_samples", "extrapolate_levels",
        "phi_fallback", "sample_floor", "baseline_max_iterations", "max_samples_per_level", "affine_gradient",
        "armijo_c1", "backtrack_factor", "ncg_max_backtracks", "max_backtracks", "coarsest_steps", "nu", "mu",
        "reuse_prefixes", "verify_coherence"}},
      {"run",
       {"mode", "output", "seed", "workers", "coupling", "state_time_stride", "gradcheck_samples",
        "gradcheck_directions", "gradcheck_step", "gradcheck_lin_tol", "gradcheck_amplitude", "report_eps",
        "field_samples", "field_level"}},
  };
  return keys;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  if (trim(v.substr(pos)) != "") throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

long to_long(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x) || std::abs(x) > 9.0e15) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<long>(x);
}

bool to_bool(const std::string& key, std::string v) {
  for (char& c : v) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

std::vector<long> to_long_list(const std::string& key, const std::string& v) {
  std::vector<long> out;
  for (double x : to_list(key, v)) {
    if (x != std::floor(x)) throw ConfigError(key + ": expected integers");
    out.push_back(static_cast<long>(x));
  }
  return out;
}

// Flat view of one section: key -> raw string.
using Section = std::map<std::string, std::string>;

template <class F>
void with(const Section& s, const std::string& key, F&& f) {
  if (auto it = s.find(key); it != s.end()) f(it->second);
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_short(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10e", x);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw ConfigError("cannot write " + p.string());
  return f;
}

std::string coupling_name(Coupling c) { return c == Coupling::top_level ? "top_level" : "per_level"; }

json config_json(const ExperimentConfig& c) {
  const auto& p = c.problem;
  const auto& o = c.optimizer;
  const auto& r = c.run;
  json region = nullptr;
  if (p.covariance.deterministic_region) {
    const auto& d = *p.covariance.deterministic_region;
    region = {d.lo[0], d.lo[1], d.hi[0], d.hi[1], d.value};
  }
  return {
      {"problem",
       {{"name", p.name},
        {"coarse_nodes", p.coarse_nodes},
        {"K", p.K},
        {"alpha", p.alpha},
        {"sigma2", p.covariance.sigma2},
        {"lambda", p.covariance.lambda},
        {"scale", p.covariance.scale},
        {"deterministic_region", region},
        {"lin_tol", p.lin_tol},
        {"face_mean", p.face_mean == FaceMean::harmonic ? "harmonic" : "arithmetic"},
        {"s", p.s},
        {"final_time", p.final_time},
        {"time_points", p.time_points}}},
      {"optimizer",
       {{"tau", o.tau},
        {"r", o.r},
        {"eps1", o.eps1},
        {"i_max", o.i_max},
        {"q", o.q},
        {"theta", o.theta},
        {"nested", o.nested},
        {"warmup_samples", o.warmup.samples},
        {"extrapolate_levels", o.warmup.extrapolate_levels},
        {"phi_fallback", o.warmup.phi_fallback},
        {"sample_floor", o.sample_floor},
        {"baseline_max_iterations", o.baseline_max_iterations},
        {"max_samples_per_level", o.max_samples_per_level},
        {"affine_gradient", o.mgopt.ncg.affine_gradient},
        {"armijo_c1", o.mgopt.ncg.armijo_c1},
        {"backtrack_factor", o.mgopt.ncg.backtrack_factor},
        {"ncg_max_backtracks", o.mgopt.ncg.max_backtracks},
        {"max_backtracks", o.mgopt.max_backtracks},
        {"coarsest_steps", o.mgopt.schedule.coarsest_steps},
        {"nu", o.mgopt.schedule.nu},
        {"mu", o.mgopt.schedule.mu},
        {"reuse_prefixes", o.mgopt.reuse_prefixes},
        {"verify_coherence", o.mgopt.verify_coherence}}},
      {"run",
       {{"mode", mode_name(r.mode)},
        {"output", r.output.string()},
        {"seed", r.seed},
        {"workers", r.workers},
        {"coupling", coupling_name(r.coupling)},
        {"state_time_stride", r.state_time_stride}}},
  };
}

void write_control(const std::filesystem::path& path, const Problem& problem, const LevelVector& u) {
  auto f = open_out(path);
  const auto& grid = problem.grid();
  const int m = grid.interior_per_axis(u.level);
  if (grid.dim_of(u.role) == 2) {
    f << "x1,x2,u\n";
    for (int j = 0; j < m; ++j)
      for (int i = 0; i < m; ++i)
        f << fmt(grid.coordinate(u.level, i)) << ',' << fmt(grid.coordinate(u.level, j)) << ','
          << fmt(u.values[static_cast<std::size_t>(j) * m + i]) << '\n';
  } else {
    f << "x,u\n";
    for (int i = 0; i < m; ++i) f << fmt(grid.coordinate(u.level, i)) << ',' << fmt(u.values[i]) << '\n';
  }
}

void write_state(const std::filesystem::path& path, const StateSnapshot& s, const Problem& problem, int K,
                 int stride) {
  auto f = open_out(path);
  const double h = problem.grid().spacing(K);
  if (const auto* b = dynamic_cast<const BurgersProblem*>(&problem)) {
    f << "t,x,value\n";
    for (int r = 0; r < s.rows; ++r) {
      const double t = r == s.rows - 1 ? b->config().final_time : r * stride * b->dt();
      for (int i = 0; i < s.cols; ++i)
        f << fmt(t) << ',' << fmt(i * h) << ',' << fmt(s.values[static_cast<std::size_t>(r) * s.cols + i]) << '\n';
    }
    return;
  }
  f << "x1,x2,value\n";
  for (int r = 0; r < s.rows; ++r)
    for (int i = 0; i < s.cols; ++i)
      f << fmt(i * h) << ',' << fmt(r * h) << ',' << fmt(s.values[static_cast<std::size_t>(r) * s.cols + i]) << '\n';
}

int run_optimizer(const ExperimentConfig& config, std::ostream& log) {
  const auto& out = config.run.output;
  auto problem = make_problem(config.problem);
  MlmcEstimator est(*problem, MlmcOptions{config.run.coupling, config.run.workers, false});
  const int K = config.problem.K;

  auto report_csv = open_out(out / "report.csv");
  report_csv << "i,eps";
  for (int l = 0; l <= K; ++l) report_csv << ",n" << l;
  report_csv << ",J0,J,g0,g,Solves,Time\n";
  report_csv.flush();
  const RowCallback on_row = [&](const RunReport& r, const ReportRow& row) {
    report_csv << row.i << ',' << fmt_short(row.eps);
    for (long n : row.n) report_csv << ',' << n;
    report_csv << ',' << fmt_short(row.J0) << ',' << fmt_short(row.J) << ',' << fmt_short(row.g0) << ','
               << fmt_short(row.g) << ',' << fmt_short(row.solves) << ',' << fmt_short(row.time) << '\n';
    report_csv.flush();
    log << r.method << " i=" << row.i << " eps=" << row.eps << " J=" << row.J << " |g|=" << row.g
        << " solves=" << row.solves << '\n';
  };

  const auto t0 = std::chrono::steady_clock::now();
  const RunReport report = config.run.mode == Mode::baseline
                               ? baseline_optimize(est, config.optimizer, problem->zero_control(K), on_row)
                               : robust_optimize(est, config.optimizer, problem->zero_control(K), on_row);

  write_control(out / "control.csv", *problem, report.control);

  {
    auto ev = open_out(out / "events.csv");
    ev << "index,event\n";
    for (std::size_t i = 0; i < report.events.size(); ++i) {
      std::string e = report.events[i];
      std::string quoted;
      for (char c : e) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      ev << i << ",\"" << quoted << "\"\n";
    }
  }

  double state_solves = 0.0;
  if (report.confirmation_sets) {
    const StateMoments m = state_moments(*problem, report.control, *report.confirmation_sets, config.run.coupling,
                                         config.run.workers, config.run.state_time_stride);
    write_state(out / "mean_state.csv", m.mean, *problem, K, config.run.state_time_stride);
    write_state(out / "var_state.csv", m.variance, *problem, K, config.run.state_time_stride);
    state_solves = equivalent_fine_solves(m.solves, problem->cost_exponent(), K);
  }

  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"i", r.i}, {"eps", r.eps}, {"n", r.n}, {"J0", r.J0}, {"J", r.J}, {"g0", r.g0}, {"g", r.g},
                    {"solves", r.solves}, {"resampled", r.resampled}});
  json confirmations = json::array();
  for (const auto& c : report.confirmations)
    confirmations.push_back({{"after", c.after}, {"eps", c.eps}, {"n", c.n}, {"J", c.J}, {"g", c.g},
                             {"passed", c.passed}, {"solves", c.solves}, {"warmup_seed", c.warmup_seed},
                             {"set_seed", c.set_seed}});
  json cycle_seeds = json::array();
  const int seeded = config.run.mode == Mode::baseline
                         ? static_cast<int>(std::count_if(report.rows.begin(), report.rows.end(),
                                                          [](const ReportRow& r) { return r.resampled; }))
                         : static_cast<int>(report.rows.size());
  for (int i = 1; i <= seeded; ++i)
    cycle_seeds.push_back({{"index", i},
                           {"warmup", cycle_seed(config.run.seed, i, SeedPurpose::warmup)},
                           {"sets", cycle_seed(config.run.seed, i, SeedPurpose::sets)}});
  json j = {
      {"version", version_string()},
      {"kernels", std::string(kernels::name(kernels::active().isa))},
      {"config", config_json(config)},
      {"seeds", {{"global", config.run.seed}, {"sample_sets", cycle_seeds}}},
      {"result",
       {{"method", report.method},
        {"converged", report.converged},
        {"status", report.status},
        {"final_J", report.converged ? json(report.final_J) : json(nullptr)},
        {"final_g", report.converged ? json(report.final_g) : json(nullptr)},
        {"optimization_solves", report.optimization_solves},
        {"confirmation_solves", report.confirmation_solves},
        {"total_solves", report.total_solves()},
        {"state_statistics_solves", state_solves},
        {"total_time", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}}},
      {"rows", rows},
      {"confirmations", confirmations},
  };
  open_out(out / "run.json") << j.dump(2) << '\n';

  log << report.method << ": " << report.status << ", total equivalent solves " << report.total_solves();
  if (report.converged) log << ", confirmed |g| = " << report.final_g << ", J = " << report.final_J;
  log << '\n';
  return report.converged ? 0 : 2;
}

int run_gradcheck(const ExperimentConfig& config, std::ostream& log) {
  const GradcheckResult res = gradcheck(config);
  auto f = open_out(config.run.output / "gradcheck.csv");
  f << "k,direction,fd,analytic,rel_error\n";
  for (const auto& r : res.rows)
    f << r.k << ',' << r.direction << ',' << fmt(r.fd) << ',' << fmt(r.analytic) << ',' << fmt(r.rel_error) << '\n';
  log << "max relative FD error: " << res.max_rel_error << " (tolerance " << res.tolerance << ")\n";
  return res.passed() ? 0 : 2;
}

int run_mlmc_report(const ExperimentConfig& config, std::ostream& log) {
  auto problem = make_problem(config.problem);
  const MlmcEstimator est(*problem, MlmcOptions{config.run.coupling, config.run.workers, false});
  const int K = config.problem.K;
  const CostModel cost{problem->cost_exponent(), K};
  const LevelStats st =
      est.level_stats(problem->zero_control(K), config.optimizer.warmup, cost,
                      cycle_seed(config.run.seed, 0, SeedPurpose::warmup));
  const double eps = config.run.report_eps > 0.0 ? config.run.report_eps : config.optimizer.r * config.optimizer.tau;
  const SampleAllocation a = optimal_allocation(st, eps, config.optimizer.theta);
  std::ostringstream csv;
  csv << "level,V,C,n,warmup_n,extrapolated,phi,phi_fitted,kappa,rho\n";
  for (int l = 0; l < st.levels(); ++l)
    csv << l << ',' << fmt(st.V[l]) << ',' << fmt(st.C[l]) << ',' << a.n[l] << ',' << st.n_used[l] << ','
        << (st.extrapolated[l] ? "true" : "false") << ',' << fmt(st.phi) << ',' << (st.phi_fitted ? "true" : "false")
        << ',' << fmt(st.kappa) << ',' << (st.rho ? fmt(*st.rho) : std::string()) << '\n';
  log << csv.str();
  open_out(config.run.output / "mlmc_report.csv") << csv.str();
  return 0;
}

int run_field_sample(const ExperimentConfig& config, std::ostream& log) {
  auto problem = make_problem(config.problem);
  const FieldSampler& sampler = problem->sampler();
  const int level = config.run.field_level >= 0 ? config.run.field_level : config.problem.K;
  const int n = sampler.nodes_per_axis(level);
  const double h = 1.0 / (n - 1);
  auto f = open_out(config.run.output / "field.csv");
  f << (sampler.dim() == 2 ? "sample,x1,x2,value\n" : "sample,x,value\n");
  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (int s = 0; s < config.run.field_samples; ++s) {
    const FieldSample k = sampler.sample(level, RngStream(config.run.seed, StreamId{level, level,
                                                                                     static_cast<std::uint64_t>(s)}));
    for (int j = 0; j < (k.dim == 2 ? n : 1); ++j)
      for (int i = 0; i < n; ++i) {
        const double v = k.at(i, j);
        f << s << ',' << fmt(i * h) << ',';
        if (k.dim == 2) f << fmt(j * h) << ',';
        f << fmt(v) << '\n';
        const double z = std::log(v / sampler.spec().scale);
        sum += z;
        sum2 += z * z;
        ++count;
      }
  }
  const double mean = sum / static_cast<double>(count);
  log << "field samples: " << config.run.field_samples << " on " << n << (sampler.dim() == 2 ? "^2" : "")
      << " nodes, log-field mean " << mean << ", variance " << sum2 / static_cast<double>(count) - mean * mean
      << " (target " << sampler.spec().sigma2 << ")\n";
  return 0;
}

}  // namespace

Mode parse_mode(const std::string& s) {
  if (s == "mgopt") return Mode::mgopt;
  if (s == "baseline") return Mode::baseline;
  if (s == "gradcheck") return Mode::gradcheck;
  if (s == "mlmc-report") return Mode::mlmc_report;
  if (s == "field-sample") return Mode::field_sample;
  throw ConfigError("unknown mode '" + s + "'");
}

std::string mode_name(Mode m) {
  switch (m) {
    case Mode::mgopt: return "mgopt";
    case Mode::baseline: return "baseline";
    case Mode::gradcheck: return "gradcheck";
    case Mode::mlmc_report: return "mlmc-report";
    case Mode::field_sample: return "field-sample";
  }
  return "?";
}

void ExperimentConfig::validate() const {
  const auto& p = problem;
  if (p.name != "laplace" && p.name != "dtn" && p.name != "burgers")
    throw ConfigError("problem.name must be laplace, dtn or burgers");
  if (p.coarse_nodes < 3 || (p.coarse_nodes - 1) % 2 != 0)
    throw ConfigError("problem.coarse_nodes must be odd and >= 3");
  if (p.K < 0 || p.K > 8) throw ConfigError("problem.K must lie in [0, 8]");
  if ((static_cast<long>(p.coarse_nodes) - 1) << p.K > 4096) throw ConfigError("finest grid exceeds 4097 nodes per axis");
  if (!(p.alpha > 0.0)) throw ConfigError("problem.alpha must be > 0");
  if (!(p.lin_tol > 0.0 && p.lin_tol < 1.0)) throw ConfigError("problem.lin_tol must lie in (0, 1)");
  p.covariance.validate();
  if (p.name == "burgers") {
    if (!(p.final_time > 0.0)) throw ConfigError("problem.final_time must be > 0");
    if (p.time_points < 2) throw ConfigError("problem.time_points must be >= 2");
    if (!std::isfinite(p.s)) throw ConfigError("problem.s must be finite");
  }
  OptimizerConfig o = optimizer;
  o.K = p.K;
  o.validate();
  o.mgopt.schedule.validate(p.K);
  if (o.sample_floor < 0) throw ConfigError("optimizer.sample_floor must be >= 0");
  if (o.warmup.extrapolate_levels < 0) throw ConfigError("optimizer.extrapolate_levels must be >= 0");
  if (!(o.warmup.phi_fallback > 0.0)) throw ConfigError("optimizer.phi_fallback must be > 0");
  if (!(o.mgopt.ncg.armijo_c1 > 0.0 && o.mgopt.ncg.armijo_c1 < 1.0))
    throw ConfigError("optimizer.armijo_c1 must lie in (0, 1)");
  if (!(o.mgopt.ncg.backtrack_factor > 1.0)) throw ConfigError("optimizer.backtrack_factor must be > 1");
  if (o.mgopt.ncg.max_backtracks < 0 || o.mgopt.max_backtracks < 0)
    throw ConfigError("backtrack limits must be >= 0");
  if (o.max_samples_per_level < 1) throw ConfigError("optimizer.max_samples_per_level must be >= 1");

  const auto& r = run;
  if (r.workers < 1) throw ConfigError("run.workers must be >= 1");
  if (r.state_time_stride < 1) throw ConfigError("run.state_time_stride must be >= 1");
  if (r.output.empty()) throw ConfigError("run.output must not be empty");
  if (!r.gradcheck_samples.empty()) {
    if (static_cast<int>(r.gradcheck_samples.size()) != p.K + 1)
      throw ConfigError("run.gradcheck_samples needs K + 1 entries");
    for (long n : r.gradcheck_samples)
      if (n < 1) throw ConfigError("run.gradcheck_samples entries must be >= 1");
  }
  if (r.gradcheck_directions < 1) throw ConfigError("run.gradcheck_directions must be >= 1");
  if (!(r.gradcheck_step > 0.0)) throw ConfigError("run.gradcheck_step must be > 0");
  if (!(r.gradcheck_lin_tol > 0.0 && r.gradcheck_lin_tol < 1.0))
    throw ConfigError("run.gradcheck_lin_tol must lie in (0, 1)");
  if (!(r.gradcheck_amplitude >= 0.0)) throw ConfigError("run.gradcheck_amplitude must be >= 0");
  if (r.report_eps < 0.0) throw ConfigError("run.report_eps must be >= 0");
  if (r.field_samples < 1) throw ConfigError("run.field_samples must be >= 1");
  if (r.field_level < -1 || r.field_level > p.K) throw ConfigError("run.field_level must lie in [-1, K]");
}

ExperimentConfig load_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  std::map<std::string, Section> sections;
  for (const auto& [name, sub] : tree) {
    const auto known = known_keys().find(name);
    if (known == known_keys().end()) throw ConfigError("unknown config section [" + name + "]");
    if (!sub.data().empty()) throw ConfigError("key '" + name + "' outside a section");
    for (const auto& [key, value] : sub) {
      if (!known->second.count(key)) throw ConfigError("unknown key " + name + "." + key);
      std::string v = value.data();
      // inline comment: ';' or '#' after whitespace
      for (std::size_t i = 1; i < v.size(); ++i)
        if ((v[i] == ';' || v[i] == '#') && (v[i - 1] == ' ' || v[i - 1] == '\t')) {
          v.resize(i);
          break;
        }
      sections[name][key] = trim(v);
    }
  }
  const Section& ps = sections["problem"];
  const Section& os = sections["optimizer"];
  const Section& rs = sections["run"];

  ExperimentConfig c;
  auto& p = c.problem;
  with(ps, "name", [&](const std::string& v) { p.name = v; });
  if (p.name == "dtn") {
    const DtnConfig d;
    p.coarse_nodes = d.coarse_nodes;
    p.covariance = d.covariance;
  } else if (p.name == "burgers") {
    const BurgersConfig b;
    p.coarse_nodes = b.coarse_nodes;
    p.covariance = b.covariance;
    p.s = b.s;
    p.final_time = b.final_time;
    p.time_points = b.time_points;
  }
  with(ps, "coarse_nodes", [&](const std::string& v) { p.coarse_nodes = static_cast<int>(to_long("coarse_nodes", v)); });
  with(ps, "K", [&](const std::string& v) { p.K = static_cast<int>(to_long("K", v)); });
  with(ps, "alpha", [&](const std::string& v) { p.alpha = to_double("alpha", v); });
  with(ps, "sigma2", [&](const std::string& v) { p.covariance.sigma2 = to_double("sigma2", v); });
  with(ps, "lambda", [&](const std::string& v) { p.covariance.lambda = to_double("lambda", v); });
  with(ps, "scale", [&](const std::string& v) { p.covariance.scale = to_double("scale", v); });
  with(ps, "deterministic_region", [&](const std::string& v) {
    if (v == "none") {
      p.covariance.deterministic_region.reset();
      return;
    }
    const auto r = to_list("deterministic_region", v);
    if (r.size() != 5) throw ConfigError("deterministic_region: expected lo1,lo2,hi1,hi2,value or none");
    p.covariance.deterministic_region = DeterministicRegion{{r[0], r[1]}, {r[2], r[3]}, r[4]};
  });
  with(ps, "lin_tol", [&](const std::string& v) { p.lin_tol = to_double("lin_tol", v); });
  with(ps, "face_mean", [&](const std::string& v) {
    if (v == "arithmetic") p.face_mean = FaceMean::arithmetic;
    else if (v == "harmonic") p.face_mean = FaceMean::harmonic;
    else throw ConfigError("face_mean must be arithmetic or harmonic");
  });
  with(ps, "s", [&](const std::string& v) { p.s = to_double("s", v); });
  with(ps, "final_time", [&](const std::string& v) { p.final_time = to_double("final_time", v); });
  with(ps, "time_points", [&](const std::string& v) { p.time_points = static_cast<int>(to_long("time_points", v)); });

  auto& o = c.optimizer;
  o.K = p.K;
  with(os, "tau", [&](const std::string& v) { o.tau = to_double("tau", v); });
  with(os, "r", [&](const std::string& v) { o.r = to_double("r", v); });
  with(os, "eps1", [&](const std::string& v) { o.eps1 = to_double("eps1", v); });
  with(os, "i_max", [&](const std::string& v) { o.i_max = static_cast<int>(to_long("i_max", v)); });
  with(os, "q", [&](const std::string& v) { o.q = to_double("q", v); });
  with(os, "theta", [&](const std::string& v) { o.theta = to_double("theta", v); });
  with(os, "nested", [&](const std::string& v) { o.nested = to_bool("nested", v); });
  with(os, "warmup_samples", [&](const std::string& v) { o.warmup.samples = static_cast<int>(to_long("warmup_samples", v)); });
  with(os, "extrapolate_levels",
       [&](const std::string& v) { o.warmup.extrapolate_levels = static_cast<int>(to_long("extrapolate_levels", v)); });
  with(os, "phi_fallback", [&](const std::string& v) { o.warmup.phi_fallback = to_double("phi_fallback", v); });
  with(os, "sample_floor", [&](const std::string& v) { o.sample_floor = to_long("sample_floor", v); });
  with(os, "baseline_max_iterations", [&](const std::string& v) {
    o.baseline_max_iterations = static_cast<int>(to_long("baseline_max_iterations", v));
  });
  with(os, "max_samples_per_level",
       [&](const std::string& v) { o.max_samples_per_level = to_long("max_samples_per_level", v); });
  with(os, "affine_gradient", [&](const std::string& v) { o.mgopt.ncg.affine_gradient = to_bool("affine_gradient", v); });
  with(os, "armijo_c1", [&](const std::string& v) { o.mgopt.ncg.armijo_c1 = to_double("armijo_c1", v); });
  with(os, "backtrack_factor", [&](const std::string& v) { o.mgopt.ncg.backtrack_factor = to_double("backtrack_factor", v); });
  with(os, "ncg_max_backtracks",
       [&](const std::string& v) { o.mgopt.ncg.max_backtracks = static_cast<int>(to_long("ncg_max_backtracks", v)); });
  with(os, "max_backtracks",
       [&](const std::string& v) { o.mgopt.max_backtracks = static_cast<int>(to_long("max_backtracks", v)); });
  with(os, "reuse_prefixes", [&](const std::string& v) { o.mgopt.reuse_prefixes = to_bool("reuse_prefixes", v); });
  with(os, "verify_coherence", [&](const std::string& v) { o.mgopt.verify_coherence = to_bool("verify_coherence", v); });
  if (p.K >= 0 && p.K <= 8) o.mgopt.schedule = SmoothingSchedule::standard(p.K);
  with(os, "coarsest_steps",
       [&](const std::string& v) { o.mgopt.schedule.coarsest_steps = static_cast<int>(to_long("coarsest_steps", v)); });
  auto int_list = [](const std::string& key, const std::string& v) {
    std::vector<int> out;
    for (long x : to_long_list(key, v)) out.push_back(static_cast<int>(x));
    return out;
  };
  with(os, "nu", [&](const std::string& v) { o.mgopt.schedule.nu = int_list("nu", v); });
  with(os, "mu", [&](const std::string& v) { o.mgopt.schedule.mu = int_list("mu", v); });

  auto& r = c.run;
  with(rs, "mode", [&](const std::string& v) { r.mode = parse_mode(v); });
  with(rs, "output", [&](const std::string& v) { r.output = v; });
  with(rs, "seed", [&](const std::string& v) {
    const long s = to_long("seed", v);
    if (s < 0) throw ConfigError("seed must be >= 0");
    r.seed = static_cast<std::uint64_t>(s);
  });
  with(rs, "workers", [&](const std::string& v) { r.workers = static_cast<int>(to_long("workers", v)); });
  with(rs, "coupling", [&](const std::string& v) {
    if (v == "per_level") r.coupling = Coupling::per_level;
    else if (v == "top_level") r.coupling = Coupling::top_level;
    else throw ConfigError("coupling must be per_level or top_level");
  });
  with(rs, "state_time_stride",
       [&](const std::string& v) { r.state_time_stride = static_cast<int>(to_long("state_time_stride", v)); });
  with(rs, "gradcheck_samples", [&](const std::string& v) { r.gradcheck_samples = to_long_list("gradcheck_samples", v); });
  with(rs, "gradcheck_directions",
       [&](const std::string& v) { r.gradcheck_directions = static_cast<int>(to_long("gradcheck_directions", v)); });
  with(rs, "gradcheck_step", [&](const std::string& v) { r.gradcheck_step = to_double("gradcheck_step", v); });
  with(rs, "gradcheck_lin_tol", [&](const std::string& v) { r.gradcheck_lin_tol = to_double("gradcheck_lin_tol", v); });
  with(rs, "gradcheck_amplitude",
       [&](const std::string& v) { r.gradcheck_amplitude = to_double("gradcheck_amplitude", v); });
  with(rs, "report_eps", [&](const std::string& v) { r.report_eps = to_double("report_eps", v); });
  with(rs, "field_samples", [&](const std::string& v) { r.field_samples = static_cast<int>(to_long("field_samples", v)); });
  with(rs, "field_level", [&](const std::string& v) { r.field_level = static_cast<int>(to_long("field_level", v)); });

  o.seed = r.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  return load_config(in);
}

void apply_environment(ExperimentConfig& config) {
  if (const char* env = std::getenv("MGOPT_SEED")) {
    const long s = to_long("MGOPT_SEED", env);
    if (s < 0) throw ConfigError("MGOPT_SEED must be >= 0");
    config.run.seed = static_cast<std::uint64_t>(s);
    config.optimizer.seed = config.run.seed;
  }
}

std::unique_ptr<Problem> make_problem(const ProblemSection& p) { return make_problem(p, p.lin_tol); }

std::unique_ptr<Problem> make_problem(const ProblemSection& p, double lin_tol) {
  if (p.name == "laplace") {
    LaplaceConfig c;
    c.coarse_nodes = p.coarse_nodes;
    c.finest_level = p.K;
    c.alpha = p.alpha;
    c.covariance = p.covariance;
    c.lin_tol = lin_tol;
    c.face_mean = p.face_mean;
    return std::make_unique<LaplaceProblem>(c);
  }
  if (p.name == "dtn") {
    DtnConfig c;
    c.coarse_nodes = p.coarse_nodes;
    c.finest_level = p.K;
    c.alpha = p.alpha;
    c.covariance = p.covariance;
    c.lin_tol = lin_tol;
    c.face_mean = p.face_mean;
    return std::make_unique<DtnProblem>(c);
  }
  if (p.name == "burgers") {
    BurgersConfig c;
    c.coarse_nodes = p.coarse_nodes;
    c.finest_level = p.K;
    c.alpha = p.alpha;
    c.covariance = p.covariance;
    c.s = p.s;
    c.final_time = p.final_time;
    c.time_points = p.time_points;
    return std::make_unique<BurgersProblem>(c);
  }
  throw ConfigError("unknown problem '" + p.name + "'");
}

GradcheckResult gradcheck(const ExperimentConfig& config) {
  const auto problem = make_problem(config.problem, config.run.gradcheck_lin_tol);
  const MlmcEstimator est(*problem, MlmcOptions{config.run.coupling, config.run.workers, false});
  const int K = config.problem.K;
  const auto& grid = problem->grid();

  SampleAllocation a;
  a.theta = config.optimizer.theta;
  a.n = config.run.gradcheck_samples;
  if (a.n.empty())
    for (int l = 0; l <= K; ++l) a.n.push_back(2L << (K - l));
  const MgoptSampleSets sets =
      build_sample_sets(K, a, config.optimizer.q, config.optimizer.nested, cycle_seed(config.run.seed, 0, SeedPurpose::sets));

  GradcheckResult res;
  res.tolerance = problem->quadratic() ? 1e-5 : 1e-4;
  std::mt19937_64 engine(derive_seed(config.run.seed, 0x6772616463686bULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double h = config.run.gradcheck_step;
  for (int k = 0; k <= K; ++k) {
    LevelVector u = problem->zero_control(k);
    for (double& x : u.values) x = config.run.gradcheck_amplitude * normal(engine);
    const GradientEstimate g = est.estimate(u, sets);
    for (int dir = 0; dir < config.run.gradcheck_directions; ++dir) {
      LevelVector d = problem->zero_control(k);
      for (double& x : d.values) x = normal(engine);
      d = scaled(1.0 / grid.norm(d), d);
      const double jp = est.estimate(linear_combination(1.0, u, h, d), sets).cost_value;
      const double jm = est.estimate(linear_combination(1.0, u, -h, d), sets).cost_value;
      GradcheckRow row;
      row.k = k;
      row.direction = dir;
      row.fd = (jp - jm) / (2.0 * h);
      row.analytic = grid.inner_product(g.value, d);
      row.rel_error = std::abs(row.fd - row.analytic) / std::max(std::abs(row.analytic), 1e-300);
      res.max_rel_error = std::max(res.max_rel_error, row.rel_error);
      res.rows.push_back(row);
    }
  }
  return res;
}

std::string version_string() { return std::string("mgmlmc ") + MGMLMC_VERSION + "+" + MGMLMC_GIT_DESCRIBE; }

int run_experiment(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  std::filesystem::create_directories(config.run.output);
  switch (config.run.mode) {
    case Mode::mgopt:
    case Mode::baseline: return run_optimizer(config, log);
    case Mode::gradcheck: return run_gradcheck(config, log);
    case Mode::mlmc_report: return run_mlmc_report(config, log);
    case Mode::field_sample: return run_field_sample(config, log);
  }
  return 1;
}

}  // namespace mgmlmc::cli
