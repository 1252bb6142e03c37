#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pdc/bench.hpp"
#include "pdc/toys.hpp"

using namespace pdc;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

int exit_code_of(ErrorCode c) {
  switch (c) {
    case ErrorCode::configuration:
    case ErrorCode::io:
    case ErrorCode::format:
    case ErrorCode::invalid_kernel:
    case ErrorCode::rank_deficiency:
      return kExitConfig;
    case ErrorCode::divergence:
      return kExitDivergence;
    default:
      return kExitFailure;
  }
}

/// Flags shared by solve and sweep; optional values are applied after parsing.
struct ExperimentFlags {
  ExperimentConfig cfg;
  std::string algo = "ipdl";
  std::string boundary = "periodic";
  double tol = 0.0;
  double r1 = 0.0;
  double r2 = 0.0;
  CLI::Option* tol_opt = nullptr;
  CLI::Option* r1_opt = nullptr;
  CLI::Option* r2_opt = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--image", cfg.image, "input image (PNG or binary PGM)")->required();
    app->add_option("--crop", cfg.crop, "center crop size, 0 keeps the full image")
        ->capture_default_str();
    app->add_option("--hsize", cfg.hsize, "odd box-blur size")->capture_default_str();
    app->add_option("--noise", cfg.noise, "salt-and-pepper density")->capture_default_str();
    app->add_option("--seed", cfg.seed, "noise seed")->capture_default_str();
    app->add_option("--boundary", boundary, "periodic or neumann")->capture_default_str();
    app->add_option("--mu", cfg.mu, "TV weight")->capture_default_str();
    app->add_option("--gamma1", cfg.gamma1, "part of mu handled inside the primal step")
        ->capture_default_str();
    app->add_option("--s1", cfg.s1, "dual scale, fidelity block")->capture_default_str();
    app->add_option("--s2", cfg.s2, "dual scale, TV block")->capture_default_str();
    r1_opt = app->add_option("--r1", r1, "primal scale, fidelity block (default 0.99/s1)");
    r2_opt = app->add_option("--r2", r2, "primal scale, TV block (default 0.99/s2)");
    app->add_option("--alpha", cfg.alpha, "tolerance decay exponent")->capture_default_str();
    app->add_option("--c-eps", cfg.c_eps, "dual tolerance constant")->capture_default_str();
    app->add_option("--c-delta", cfg.c_delta, "primal tolerance constant")->capture_default_str();
    app->add_option("--algo", algo, "ipdl, pd-exact, pdl or pdhg")->capture_default_str();
    app->add_option("--max-outer", cfg.max_outer, "outer iteration cap")->capture_default_str();
    tol_opt = app->add_option("--tol", tol, "stop at this relative objective error");
    app->add_option("--reference-iters", cfg.reference_iterations,
                    "iterations of the reference solve for F*")
        ->capture_default_str();
    app->add_option("--cache-dir", cfg.cache_dir, "directory caching F* across runs");
    app->add_option("--pdhg-step", cfg.pdhg_step, "pdhg tau = sigma, 0 for 0.99/||A||")
        ->capture_default_str();
    app->add_option("--inner-max-iters", cfg.inner.max_iters, "inner iteration cap per step")
        ->capture_default_str();
  }

  ExperimentConfig finish() {
    cfg.algo = parse_algorithm(algo);
    cfg.boundary = parse_boundary(boundary);
    if (tol_opt->count()) cfg.tol = tol;
    if (r1_opt->count()) cfg.r1 = r1;
    if (r2_opt->count()) cfg.r2 = r2;
    return cfg;
  }
};

int run_solve(ExperimentFlags& flags, const std::string& log, const std::string& out) {
  ExperimentConfig cfg = flags.finish();
  cfg.log_path = log;
  cfg.out_path = out;
  const auto res = run_experiment(cfg);
  const double objective = res.record.rows.empty() ? kInf : res.record.rows.back().objective;
  std::printf("algo=%s outer_iters=%ld inner_iters=%ld objective=%s final_rel_err=%s wall_ms=%.3f\n",
              to_string(cfg.algo), res.outer_iters, res.inner_iters,
              format_double(objective).c_str(), format_double(res.final_rel_err).c_str(),
              res.wall_ms);
  return kExitOk;
}

int run_sweep(ExperimentFlags& flags, const std::string& knob, const std::vector<double>& values,
              const std::string& out) {
  const ExperimentConfig cfg = flags.finish();
  const auto rows = sweep(cfg, knob, values);
  if (out.empty())
    std::cout << to_csv(rows);
  else
    write_csv(rows, out);
  for (const auto& r : rows)
    if (!r.error.empty()) std::fprintf(stderr, "%s=%s: %s\n", knob.c_str(),
                                       format_double(r.value).c_str(), r.error.c_str());
  return kExitOk;
}

template <class T>
T take(json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  T v = j.at(key).get<T>();
  j.erase(key);
  return v;
}

/// Rate study on a problem with a known saddle point. The config is a JSON
/// object; see README for the keys.
int run_rates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  json j;
  try {
    j = json::parse(in);
    if (!j.is_object()) throw Error(ErrorCode::configuration, "rates config must be a JSON object");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("rates config: ") + e.what());
  }

  try {
    const std::string problem = take<std::string>(j, "problem", "quadratic-toy");
    const Algorithm algo = parse_algorithm(take<std::string>(j, "algo", "ipdl"));
    const long iterations = take<long>(j, "iterations", 1000);
    const std::string log = take<std::string>(j, "log", "");
    require(iterations > 0, ErrorCode::configuration, "iterations must be positive");
    require(algo != Algorithm::pdhg, ErrorCode::configuration,
            "rates needs the tolerance ledger of ipdl, pd-exact or pdl");

    ToleranceSchedule sched;
    sched.alpha = take<double>(j, "alpha", 1.0);
    sched.c_eps = take<double>(j, "c_eps", 1.0);
    sched.c_delta = take<double>(j, "c_delta", 1.0);
    const double step_default = problem == "scalar-toy" ? 0.5 : 1.0;
    sched.tau = StepSequence::constant(take<double>(j, "tau", step_default));
    sched.lambda = StepSequence::constant(take<double>(j, "lambda", step_default));

    std::optional<SaddleProblem> sp;
    SolverState init;
    RunOptions opt;
    if (problem == "scalar-toy" || problem == "quadratic-toy") {
      const bool adversarial = take<bool>(j, "adversarial", true);
      const auto toy = problem == "scalar-toy" ? scalar_toy() : quadratic_toy({adversarial});
      sp = toy.problem;
      const Index n = toy.x_star.size(), m = toy.y_star.size();
      init = SolverState::initial(problem == "scalar-toy" ? Vec::Ones(n) : Vec::Zero(n),
                                  Vec::Zero(m));
      opt.reference_saddle = std::make_pair(toy.x_star, toy.y_star);
    } else if (problem == "tvl1") {
      ExperimentConfig cfg;
      cfg.image = take<std::string>(j, "image", "");
      cfg.crop = take<Index>(j, "crop", 16);
      cfg.hsize = take<Index>(j, "hsize", cfg.hsize);
      cfg.noise = take<double>(j, "noise", cfg.noise);
      cfg.seed = take<std::uint64_t>(j, "seed", cfg.seed);
      cfg.boundary = parse_boundary(take<std::string>(j, "boundary", "periodic"));
      cfg.mu = take<double>(j, "mu", cfg.mu);
      cfg.gamma1 = take<double>(j, "gamma1", cfg.gamma1);
      cfg.s1 = take<double>(j, "s1", cfg.s1);
      cfg.s2 = take<double>(j, "s2", cfg.s2);
      if (j.contains("r1")) cfg.r1 = take<double>(j, "r1", 0.0);
      if (j.contains("r2")) cfg.r2 = take<double>(j, "r2", 0.0);
      cfg.reference_iterations = take<long>(j, "reference_iterations", cfg.reference_iterations);
      cfg.algo = algo;
      cfg.alpha = sched.alpha;
      cfg.validate();
      const auto inst = make_instance(cfg);
      const auto prm = cfg.params(inst.observed.rows, inst.observed.cols);
      const auto prob = make_tvl1_problem(prm, inst.observed.pixels);
      const auto ref = compute_reference(prm, inst.observed.pixels, cfg.reference_iterations);
      sp = make_saddle(prob);
      init = initial_state(prob);
      opt.reference_saddle = std::make_pair(ref.x, ref.y);
    } else {
      throw Error(ErrorCode::configuration, "unknown problem '" + problem + "'");
    }
    if (!j.empty()) throw Error(ErrorCode::configuration, "unknown key '" + j.begin().key() + "'");

    const auto& [xs, ys] = *opt.reference_saddle;
    opt.bound_distances = std::make_pair(metric_norm(ys - init.y_bar, sp->s),
                                         metric_norm(sp->a.apply(xs - init.x), sp->r));
    const auto run = run_solver(*sp, algo, sched, {iterations, std::nullopt, 0.0}, init, opt);
    if (!log.empty()) write_csv(run.record, log);
    const auto rep = rate_report(run.record);
    const json out = {{"problem", problem},          {"algo", to_string(algo)},
                      {"iterations", iterations},    {"slope", rep.slope},
                      {"fitted_points", rep.fitted_points}, {"violations", rep.violations},
                      {"max_gap_over_bound", rep.max_ratio}};
    std::cout << out.dump(2) << '\n';
    return kExitOk;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::configuration, std::string("rates config: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inexact primal-dual solvers for TV-L1 deblurring"};
  app.require_subcommand(1);

  ExperimentFlags solve_flags;
  std::string log_path, out_path;
  auto* solve = app.add_subcommand("solve", "restore one degraded image");
  solve_flags.attach(solve);
  solve->add_option("--log", log_path, "per-iteration CSV log");
  solve->add_option("--out", out_path, "restored image (.png or .pgm)");

  ExperimentFlags sweep_flags;
  std::string knob = "alpha", sweep_out;
  std::vector<double> values;
  auto* sw = app.add_subcommand("sweep", "one run per knob value on the same degraded image");
  sweep_flags.attach(sw);
  sw->add_option("--knob", knob, "alpha, gamma1, s1 or s2")->capture_default_str();
  sw->add_option("--values", values, "comma-separated values")->delimiter(',')->required();
  sw->add_option("--out", sweep_out, "summary CSV (default stdout)");

  std::string config_path;
  auto* rates = app.add_subcommand("rates", "empirical rate and bound check on a known saddle");
  rates->add_option("--config", config_path, "JSON config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*solve) return run_solve(solve_flags, log_path, out_path);
    if (*sw) return run_sweep(sweep_flags, knob, values, sweep_out);
    return run_rates(config_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_of(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
}
