#pragma once

// Experiment orchestration: degraded instances, reference optima, single runs,
// parameter sweeps and empirical rate reports.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pdc/imgio.hpp"
#include "pdc/pdcore.hpp"
#include "pdc/tvl1.hpp"

namespace pdc {

struct ExperimentConfig {
  std::string image;
  Index crop = 64;  // 0 keeps the full image
  Index hsize = 9;
  double noise = 0.2;
  std::uint64_t seed = 2024;
  Boundary boundary = Boundary::periodic;
  double mu = 0.05;
  double gamma1 = 0.025;
  double s1 = 1.0;
  double s2 = 2.0;
  std::optional<double> r1;  // default 0.99 / s1
  std::optional<double> r2;  // default 0.99 / s2
  double alpha = 1.0;
  double c_eps = 1.0;
  double c_delta = 1.0;
  Algorithm algo = Algorithm::ipdl;
  long max_outer = 1000;
  std::optional<double> tol;  // relative objective error
  long reference_iterations = 20000;
  double pdhg_step = 0.0;  // tau = sigma for pdhg; 0 means 0.99 / ||A||
  std::string cache_dir;  // empty: no on-disk cache of F*
  std::string log_path;
  std::string out_path;
  InnerSettings inner;

  double r1_value() const { return r1 ? *r1 : 0.99 / s1; }
  double r2_value() const { return r2 ? *r2 : 0.99 / s2; }

  /// gamma1 of the split actually solved: pdl and pdhg work on gamma1 = 0.
  double effective_gamma1() const {
    return algo == Algorithm::pdl || algo == Algorithm::pdhg ? 0.0 : gamma1;
  }

  void validate() const {
    require(!image.empty(), ErrorCode::configuration, "no input image");
    require(crop >= 0, ErrorCode::configuration, "crop must be nonnegative");
    require(hsize >= 1 && hsize % 2 == 1, ErrorCode::configuration, "hsize must be odd");
    require(noise >= 0.0 && noise <= 1.0, ErrorCode::configuration, "noise density in [0, 1]");
    require(mu > 0.0, ErrorCode::configuration, "mu must be positive");
    if (algo == Algorithm::ipdl || algo == Algorithm::pd_exact)
      require(gamma1 > 0.0 && gamma1 < mu, ErrorCode::configuration, "gamma1 must lie in (0, mu)");
    require(s1 > 0 && s2 > 0 && r1_value() > 0 && r2_value() > 0, ErrorCode::configuration,
            "s1, s2, r1, r2 must be positive");
    require(alpha > 0.0, ErrorCode::configuration, "alpha must be positive");
    require(c_eps >= 0.0 && c_delta >= 0.0, ErrorCode::configuration,
            "tolerance constants must be nonnegative");
    require(max_outer >= 0, ErrorCode::configuration, "max_outer must be nonnegative");
    if (tol) require(*tol > 0.0, ErrorCode::configuration, "tol must be positive");
    require(reference_iterations > 0, ErrorCode::configuration, "reference iterations");
    require(pdhg_step >= 0.0, ErrorCode::configuration, "pdhg step must be nonnegative");
    const auto pdl = make_pdl_config(r1_value(), s1, r2_value(), s2, 1, 1);
    if (algo != Algorithm::pdhg && !check_step_condition(pdl.r, pdl.s, 1.0, 1.0))
      throw Error(ErrorCode::configuration, "step condition r_i s_i < 1 violated");
  }

  TvL1Params params(Index rows, Index cols) const {
    TvL1Params p;
    p.rows = rows;
    p.cols = cols;
    p.hsize = hsize;
    p.boundary = boundary;
    p.mu = mu;
    p.gamma1 = effective_gamma1();
    p.s1 = s1;
    p.s2 = s2;
    p.r1 = r1_value();
    p.r2 = r2_value();
    return p;
  }
};

struct Instance {
  ImageGrid clean;
  ImageGrid observed;
};

inline Instance make_instance(const ExperimentConfig& cfg) {
  Instance in;
  in.clean = center_crop(load_image(cfg.image), cfg.crop);
  in.observed = degrade(in.clean, cfg.hsize, cfg.noise, cfg.seed, cfg.boundary);
  return in;
}

/// FNV-1a over the observed pixels and the model parameters that fix F.
inline std::uint64_t instance_hash(const Vec& observed, Index rows, Index cols, Index hsize,
                                   double mu, Boundary bc, long iterations) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  mix(observed.data(), sizeof(double) * std::size_t(observed.size()));
  const long meta[] = {long(rows), long(cols), long(hsize), long(bc), iterations};
  mix(meta, sizeof meta);
  mix(&mu, sizeof mu);
  return h;
}

struct ReferenceSolution {
  double f_star = 0.0;
  Vec x;  // minimizer estimate
  Vec y;  // dual of the gamma1 = 0 split, a saddle dual for every split
};

/// Exact primal-dual iterations on the gamma1 = 0 split with the block
/// metrics of `prm`; F* is the best objective seen.
inline ReferenceSolution compute_reference(const TvL1Params& prm, const Vec& observed,
                                           long iterations) {
  TvL1Params p0 = prm;
  p0.gamma1 = 0.0;
  const TvL1Problem prob = make_tvl1_problem(p0, observed);
  const SaddleProblem sp = make_saddle(prob);
  ReferenceSolution ref;
  ref.f_star = objective(prob, observed);
  ref.x = observed;
  RunOptions opt;
  opt.divergence_threshold = kInf;
  opt.observer = [&](const SolverState& st) {
    const double fx = objective(prob, st.x);
    if (fx < ref.f_star) {
      ref.f_star = fx;
      ref.x = st.x;
    }
  };
  const auto run = run_solver(sp, Algorithm::pd_exact, ToleranceSchedule::exact(),
                              {iterations, std::nullopt, 0.0}, initial_state(prob), opt);
  ref.y = run.state.y;
  return ref;
}

/// F* with an optional on-disk cache keyed by instance_hash.
inline double reference_optimum(const TvL1Params& prm, const Vec& observed, long iterations,
                                const std::string& cache_dir) {
  static std::map<std::uint64_t, double> memo;
  const auto key = instance_hash(observed, prm.rows, prm.cols, prm.hsize, prm.mu, prm.boundary,
                                 iterations);
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  std::filesystem::path file;
  if (!cache_dir.empty()) {
    std::ostringstream name;
    name << "fstar_" << std::hex << key << ".txt";
    file = std::filesystem::path(cache_dir) / name.str();
    std::ifstream in(file);
    double v = 0.0;
    if (in >> v && v > 0.0) return memo[key] = v;
  }
  const double f = compute_reference(prm, observed, iterations).f_star;
  if (!file.empty()) {
    std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file);
    out << std::setprecision(17) << f << '\n';
  }
  return memo[key] = f;
}

struct ExperimentResult {
  RunRecord record;
  ImageGrid restored;
  long outer_iters = 0;
  long inner_iters = 0;
  double wall_ms = 0.0;
  double f_star = std::numeric_limits<double>::quiet_NaN();
  double final_rel_err = std::numeric_limits<double>::quiet_NaN();
};

inline ToleranceSchedule schedule_of(const ExperimentConfig& cfg) {
  ToleranceSchedule s;
  s.alpha = cfg.alpha;
  s.c_eps = cfg.c_eps;
  s.c_delta = cfg.c_delta;
  return s;
}

/// Runs one configuration on `instance` (built from cfg when absent) and
/// writes the CSV log and restored image when paths are set. F* is computed
/// whenever a tolerance is requested or `with_reference` is set.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const Instance* instance = nullptr,
                                       bool with_reference = false) {
  cfg.validate();
  Instance local;
  if (!instance) {
    local = make_instance(cfg);
    instance = &local;
  }
  const ImageGrid& obs = instance->observed;
  const TvL1Params prm = cfg.params(obs.rows, obs.cols);
  const TvL1Problem prob = make_tvl1_problem(prm, obs.pixels);

  ExperimentResult res;
  StoppingRule stop{cfg.max_outer, cfg.tol, 0.0};
  if (cfg.tol || with_reference) {
    res.f_star = reference_optimum(prm, obs.pixels, cfg.reference_iterations, cfg.cache_dir);
    stop.f_star = res.f_star;
  }
  SaddleProblem sp = make_saddle(prob, cfg.inner);
  const auto t0 = std::chrono::steady_clock::now();
  RunOptions opt;
  opt.pdhg_tau = opt.pdhg_sigma = cfg.pdhg_step;
  RunResult run = run_solver(sp, cfg.algo, schedule_of(cfg), stop, initial_state(prob), opt);
  res.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  res.record = std::move(run.record);
  res.outer_iters = run.state.k;
  res.inner_iters = run.state.inner_iteration_total;
  res.restored = {obs.rows, obs.cols, clamp(run.state.x, 0.0, 1.0)};
  if (stop.f_star > 0.0) res.final_rel_err = (objective(prob, run.state.x) - res.f_star) / res.f_star;
  if (!cfg.log_path.empty()) write_csv(res.record, cfg.log_path);
  if (!cfg.out_path.empty()) save_image(res.restored, cfg.out_path);
  return res;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  std::string knob;
  double value = 0.0;
  long outer_iters = 0;
  long inner_iters = 0;
  double wall_ms = 0.0;
  double final_rel_err = std::numeric_limits<double>::quiet_NaN();
  std::string error;  // empty when the run succeeded
};

inline constexpr const char* kSweepCsvHeader =
    "knob,value,outer_iters,inner_iters,wall_ms,final_rel_err";

inline void set_knob(ExperimentConfig& cfg, const std::string& knob, double v) {
  if (knob == "alpha") cfg.alpha = v;
  else if (knob == "s1") cfg.s1 = v;
  else if (knob == "s2") cfg.s2 = v;
  else if (knob == "gamma1") cfg.gamma1 = v;
  else throw Error(ErrorCode::configuration, "unknown sweep knob '" + knob + "'");
}

/// One run per value on the same degraded image. Failed runs keep their
/// error message and the sweep goes on. Rows are sorted by value.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, const std::string& knob,
                                   std::vector<double> values) {
  ExperimentConfig probe = base;
  set_knob(probe, knob, values.empty() ? 0.0 : values.front());
  const Instance inst = make_instance(base);
  std::sort(values.begin(), values.end());
  std::vector<SweepRow> rows;
  for (double v : values) {
    ExperimentConfig cfg = base;
    set_knob(cfg, knob, v);
    cfg.log_path.clear();
    cfg.out_path.clear();
    SweepRow row;
    row.knob = knob;
    row.value = v;
    try {
      const auto r = run_experiment(cfg, &inst, true);
      row.outer_iters = r.outer_iters;
      row.inner_iters = r.inner_iters;
      row.wall_ms = r.wall_ms;
      row.final_rel_err = r.final_rel_err;
    } catch (const Error& e) {
      row.error = e.what();
      row.outer_iters = -1;
      row.inner_iters = -1;
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string to_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << kSweepCsvHeader << '\n';
  for (const auto& r : rows) {
    char ms[40];
    std::snprintf(ms, sizeof ms, "%.3f", r.wall_ms);
    os << r.knob << ',' << format_double(r.value) << ',' << r.outer_iters << ',' << r.inner_iters
       << ',' << ms << ',' << format_double(r.final_rel_err) << '\n';
  }
  return os.str();
}

inline void write_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path);
  out << to_csv(rows);
}

// ---------------------------------------------------------------------------
// Rates

struct RateReport {
  double slope = 0.0;
  long violations = 0;
  long fitted_points = 0;
  double max_ratio = 0.0;  // max gap / bound
};

/// Least-squares slope of log(gap) against log(N) over the last decade of
/// iterations, and the number of rows whose gap exceeds the bound column
/// (when present) by more than `slack`.
inline RateReport rate_report(const RunRecord& rec, double slack = 1e-8) {
  if (rec.rows.size() < 20)
    throw Error(ErrorCode::insufficient_data, "rate report needs at least 20 iterations",
                double(rec.rows.size()));
  RateReport rep;
  for (const auto& r : rec.rows) {
    if (std::isnan(r.bound)) continue;
    if (r.gap > r.bound + slack) ++rep.violations;
    if (r.bound > 0.0) rep.max_ratio = std::max(rep.max_ratio, r.gap / r.bound);
  }
  const double n_max = double(rec.rows.back().iter);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  long m = 0;
  for (const auto& r : rec.rows) {
    if (double(r.iter) < n_max / 10.0 || !(r.gap > 0.0)) continue;
    const double lx = std::log(double(r.iter)), ly = std::log(r.gap);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  if (m < 2) throw Error(ErrorCode::insufficient_data, "no positive gaps to fit", double(m));
  rep.fitted_points = m;
  rep.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return rep;
}

}  // namespace pdc
