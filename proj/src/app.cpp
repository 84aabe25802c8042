#include "enkbf/app.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace enkbf::app {

namespace fs = std::filesystem;

ExperimentSpec load_spec(const fs::path& config, const Overrides& ov) {
  ExperimentSpec spec = parse_config(config);
  if (ov.seed) spec.base_seed = *ov.seed;
  if (ov.out) spec.output_dir = *ov.out;
  if (ov.threads) spec.threads = *ov.threads;
  if (ov.stride) spec.stride = *ov.stride;
  spec.validate();
  return spec;
}

void apply_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

namespace {

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

CommandResult simulate(const ExperimentSpec& spec, std::ostream& log) {
  SimConfig cfg;
  cfg.n = spec.nx.front();
  cfg.dt = spec.dt;
  cfg.steps = spec.steps;
  cfg.seed = spec.base_seed;
  cfg.spinup_time = spec.spinup_time;
  cfg.forcing = spec.forcing;
  cfg.obs = ObsNoiseSpec::isotropic(cfg.n, spec.epsilon.front());
  cfg.truth_stride = spec.truth_stride;

  const fs::path dir = spec.output_dir;
  fs::create_directories(dir);
  const auto model = DriftModel::lorenz96(cfg.n, cfg.forcing);
  spdlog::info("simulating n={} eps={} steps={} dt={}", cfg.n, cfg.obs.epsilon, cfg.steps, cfg.dt);
  const auto out = enkbf::simulate(cfg, model, dir / "observations.bin", dir / "truth.bin");

  nlohmann::ordered_json meta;
  meta["command"] = "simulate";
  meta["n"] = cfg.n;
  meta["dt"] = cfg.dt;
  meta["steps"] = cfg.steps;
  meta["epsilon"] = cfg.obs.epsilon;
  meta["seed"] = cfg.seed;
  meta["forcing"] = cfg.forcing;
  meta["spinup_time"] = cfg.spinup_time;
  meta["truth_stride"] = cfg.truth_stride;
  meta["cap_exceedances"] = out.cap_exceedances;
  write_json(dir / "simulate.json", meta);

  log << "observations: " << out.observations.string() << '\n'
      << "truth: " << out.truth.string() << '\n';
  if (out.cap_exceedances > 0) {
    log << "note: " << out.cap_exceedances << " recorded states left the box |x| <= 40\n";
  }
  return {0, {out.observations, out.truth, dir / "simulate.json"}};
}

CommandResult filter(const ExperimentSpec& spec, const fs::path& obs_path,
                     const std::optional<fs::path>& truth_path, std::ostream& log) {
  StreamObservationSource source(obs_path);
  const std::size_t n = source.n();
  const double dt = source.dt();
  const double eps = source.epsilon();
  if (spec.component > n) throw ConfigError(0, "component: exceeds the stream dimension");

  const auto model = DriftModel::lorenz96(n, spec.forcing);
  const FilterConfig cfg(build_localization(n, spec.l), ObsNoiseSpec::isotropic(n, eps), dt,
                         spec.inflation, -1.0, spec.stiffness_guard);

  std::optional<StreamReader> truth;
  Vector center;
  std::uint64_t truth_stride = 1;
  if (truth_path) {
    truth.emplace(*truth_path);
    const auto& h = truth->header();
    if (!h.is_trajectory() || h.n != n) throw std::runtime_error("truth file does not match the stream");
    truth_stride = static_cast<std::uint64_t>(std::llround(h.dt / dt));
    if (truth_stride < 1 || spec.stride % truth_stride != 0) {
      throw ConfigError(0, "stride: must be a multiple of the truth record spacing");
    }
    if (!truth->next(center)) throw std::runtime_error("truth file is empty");
  } else {
    center = spinup_init(n, spec.forcing, spec.spinup_time, spec.base_seed).x;
  }
  auto ens_rng = make_engine(spec.base_seed, Stream::ensemble);
  Ensemble init = init_ensemble(center, spec.m, ens_rng);

  const auto loc = localization_stats(cfg.phi());
  const auto bounds = stability_bounds(model.c_f(), 1.0, 1.0, loc.c_phi, eps);
  const double burn_in = spec.burn_in >= 0.0 ? spec.burn_in : 10.0 * bounds.t_star_lower;

  const fs::path dir = spec.output_dir;
  fs::create_directories(dir);
  std::ofstream means(dir / "filter_mean.csv", std::ios::trunc);
  if (!means) throw std::runtime_error("cannot write filter_mean.csv");
  means << "step,t";
  for (std::size_t i = 1; i <= n; ++i) means << ",x_" << i;
  means << '\n';

  MetricsAccumulator acc(n, burn_in);
  std::uint64_t truth_index = 0;  // record index of `center`
  Vector x = center;
  RunOptions opts;
  opts.stride = spec.stride;
  opts.keep_means = false;
  opts.on_record = [&](std::uint64_t step, double t, const Vector& mean) {
    means << step << ',' << format_double(t);
    for (Eigen::Index i = 0; i < mean.size(); ++i) means << ',' << format_double(mean(i));
    means << '\n';
    if (!truth) return;
    const std::uint64_t want = step / truth_stride;
    while (truth_index < want) {
      if (!truth->next(x)) throw std::runtime_error("truth file ends before the observations");
      ++truth_index;
    }
    acc.add(t, x - mean);
  };

  spdlog::info("filtering {} (n={}, eps={}, dt={}, M={})", obs_path.string(), n, eps, dt, spec.m);
  const FilterRun run = run_filter(source, cfg, model, std::move(init), opts);
  means.close();

  CommandResult result{0, {dir / "filter_mean.csv", dir / "filter_diagnostics.csv"}};
  write_diagnostics_csv(dir / "filter_diagnostics.csv", run.diagnostics);

  nlohmann::ordered_json meta;
  meta["command"] = "filter";
  meta["observations"] = obs_path.string();
  meta["n"] = n;
  meta["dt"] = dt;
  meta["epsilon"] = eps;
  meta["steps"] = run.steps;
  meta["m"] = spec.m;
  meta["l"] = spec.l;
  meta["seed"] = spec.base_seed;
  meta["stride"] = spec.stride;
  meta["inflation"] = spec.inflation;
  meta["lambda_max"] = run.bounds.lambda_max;
  meta["lambda_min"] = run.bounds.lambda_min;
  meta["t_star_lower"] = run.bounds.t_star_lower;
  meta["p0_max"] = run.p0_max;
  meta["rho"] = run.rho;
  meta["burn_in"] = burn_in;
  meta["upper_violations"] = run.violations.upper;
  meta["lower_violations"] = run.violations.lower;
  meta["inverse_violations"] = run.violations.inverse;

  log << "steps: " << run.steps << "  lambda_max: " << run.bounds.lambda_max
      << "  lambda_min: " << run.bounds.lambda_min << '\n'
      << "bound violations (upper/lower/inverse): " << run.violations.upper << '/'
      << run.violations.lower << '/' << run.violations.inverse << '\n';

  if (truth) {
    MetricsRecord m = acc.finish("filter");
    double p_max_max = 0.0, p_min_min = 0.0;
    bool first = true;
    for (const auto& row : run.diagnostics) {
      if (row.t < burn_in) continue;
      p_max_max = first ? row.p_max : std::max(p_max_max, row.p_max);
      p_min_min = first ? row.p_min : std::min(p_min_min, row.p_min);
      first = false;
    }
    m.p_max_max = p_max_max;
    m.p_min_min = p_min_min;
    m.upper_violations = run.violations.upper;
    m.lower_violations = run.violations.lower;
    m.inverse_violations = run.violations.inverse;
    write_metrics_csv(dir / "filter_metrics.csv", {m});
    result.files.push_back(dir / "filter_metrics.csv");
    meta["mse_time_avg_per_dim"] = m.mse_time_avg_per_dim;
    meta["pathwise_sup"] = m.pathwise_sup;
    log << "time-averaged MSE per dimension: " << m.mse_time_avg_per_dim
        << "  pathwise sup: " << m.pathwise_sup << '\n';
  }
  write_json(dir / "filter.json", meta);
  result.files.push_back(dir / "filter.json");
  return result;
}

CommandResult experiment(const std::string& kind, const ExperimentSpec& spec, std::ostream& log) {
  SweepResult r;
  spdlog::info("running {} sweep", kind);
  if (kind == "eps") {
    r = eps_sweep(spec);
  } else if (kind == "dim") {
    r = dim_sweep(spec);
  } else if (kind == "time") {
    r = time_sweep(spec);
  } else {
    throw std::invalid_argument("unknown experiment '" + kind + "' (expected eps, dim or time)");
  }
  auto files = write_sweep_outputs(spec.output_dir, spec, r);

  int failed = 0;
  for (const auto& row : r.rows) {
    if (row.status != "ok") {
      ++failed;
      log << "cell " << row.cell << " repeat " << row.repeat << ": " << row.status << '\n';
    }
  }
  for (const auto& c : r.cells) {
    log << "cell " << c.cell << "  eps " << c.epsilon << "  nx " << c.nx;
    if (c.horizon > 0.0) log << "  T " << c.horizon;
    log << "  mse/dim " << c.mse_per_dim << "  mse " << c.mse_total << "  comp " << c.component_mse
        << "  sup " << c.pathwise_sup << '\n';
  }
  if (r.eps_fit) log << "log-log slope: " << r.eps_fit->slope << " (R^2 " << r.eps_fit->r2 << ")\n";
  if (r.dim_fit) log << "linear fit in nx: slope " << r.dim_fit->slope << ", R^2 " << r.dim_fit->r2 << '\n';
  if (r.component_flatness) log << "component mse max/min: " << *r.component_flatness << '\n';
  if (r.time_fit) {
    log << "a + b log T: a " << r.time_fit->a << ", b " << r.time_fit->b << ", residual rms "
        << r.time_fit->residual_rms << " (" << 100.0 * r.time_fit->residual_rms_rel << "% of mean)\n";
  }
  if (r.sup_growth) log << "sup growth largest/smallest T: " << *r.sup_growth << '\n';
  for (const auto& note : r.notes) log << "note: " << note << '\n';
  files.push_back(fs::path(spec.output_dir) / (to_string(r.scenario) + ".json"));
  return {failed > 0 ? 1 : 0, files};
}

CommandResult verify(const std::string& selector, std::ostream& log, const VerifyOptions& opts) {
  const auto results = run_suites(selector, opts);
  int code = 0;
  for (const auto& r : results) {
    log << (r.passed() ? "PASS " : "FAIL ") << r.name << " (" << r.checks << " checks)\n";
    for (const auto& f : r.failures) log << "  counterexample: " << f << '\n';
    if (!r.passed()) code = 1;
  }
  return {code, {}};
}

}  // namespace enkbf::app
