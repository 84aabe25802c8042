#include "enkbf/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace enkbf {

// ---------------------------------------------------------------------------
// Configuration

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::single: return "single";
    case Scenario::eps_sweep: return "eps_sweep";
    case Scenario::dim_sweep: return "dim_sweep";
    case Scenario::time_sweep: return "time_sweep";
  }
  return "single";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "single") return Scenario::single;
  if (s == "eps_sweep" || s == "eps") return Scenario::eps_sweep;
  if (s == "dim_sweep" || s == "dim") return Scenario::dim_sweep;
  if (s == "time_sweep" || s == "time") return Scenario::time_sweep;
  throw std::invalid_argument("unknown scenario '" + s + "'");
}

ConfigError::ConfigError(std::size_t line, const std::string& what)
    : std::runtime_error(line ? "config line " + std::to_string(line) + ": " + what
                              : "config: " + what),
      line_(line) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const auto comma = s.find(',', begin);
    out.push_back(trim(s.substr(begin, comma == std::string::npos ? std::string::npos : comma - begin)));
    if (comma == std::string::npos) break;
    begin = comma + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& text, std::size_t line, const std::string& key) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc{} || ptr != last) {
    throw ConfigError(line, key + ": invalid value '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text, std::size_t line, const std::string& key) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw ConfigError(line, key + ": expected a boolean, got '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& text, std::size_t line, const std::string& key) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<T>(item, line, key));
  if (out.empty()) throw ConfigError(line, key + ": empty list");
  return out;
}

}  // namespace

void ExperimentSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& msg) {
    throw ConfigError(0, field + ": " + msg);
  };
  if (epsilon.empty()) fail("epsilon", "grid is empty");
  for (double e : epsilon) {
    if (!(e > 0.0) || !std::isfinite(e)) fail("epsilon", "values must be finite and > 0");
  }
  if (nx.empty()) fail("nx", "grid is empty");
  for (auto n : nx) {
    if (n < 4) fail("nx", "dimensions must be >= 4");
  }
  for (double h : horizon) {
    if (!(h > 0.0) || !std::isfinite(h)) fail("horizon", "values must be finite and > 0");
  }
  if (scenario == Scenario::time_sweep && horizon.empty()) fail("horizon", "time sweep needs a T grid");
  if (m < 2) fail("m", "ensemble size must be >= 2");
  if (!(dt > 0.0) || !std::isfinite(dt)) fail("dt", "must be finite and > 0");
  if (steps < 1) fail("steps", "must be >= 1");
  if (repeats < 1) fail("repeats", "must be >= 1");
  if (!(l > 0.0)) fail("l", "localization radius must be > 0");
  if (!std::isfinite(forcing)) fail("forcing", "must be finite");
  if (!(spinup_time >= 0.0)) fail("spinup_time", "must be >= 0");
  if (stride < 1) fail("stride", "must be >= 1");
  if (truth_stride < 1) fail("truth_stride", "must be >= 1");
  if (output_dir.empty()) fail("output_dir", "must not be empty");
  if (threads < 0) fail("threads", "must be >= 0");
  const auto min_n = *std::min_element(nx.begin(), nx.end());
  if (component < 1 || component > min_n) fail("component", "must lie in [1, min(nx)]");
  for (double h : horizon) {
    if (h / dt < 1.0) fail("horizon", "every T must span at least one step of dt");
  }
}

ExperimentSpec parse_config_text(const std::string& text) {
  ExperimentSpec spec;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "missing key");
    if (!seen.insert(key).second) throw ConfigError(line, key + ": duplicate key");

    if (key == "scenario") {
      try {
        spec.scenario = scenario_from_string(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(line, "scenario: " + std::string(e.what()));
      }
    } else if (key == "epsilon") {
      spec.epsilon = parse_list<double>(value, line, key);
    } else if (key == "nx") {
      spec.nx = parse_list<std::size_t>(value, line, key);
    } else if (key == "horizon") {
      spec.horizon = parse_list<double>(value, line, key);
    } else if (key == "m") {
      spec.m = parse_number<std::size_t>(value, line, key);
    } else if (key == "dt") {
      spec.dt = parse_number<double>(value, line, key);
    } else if (key == "steps") {
      spec.steps = parse_number<std::uint64_t>(value, line, key);
    } else if (key == "repeats") {
      spec.repeats = parse_number<std::uint64_t>(value, line, key);
    } else if (key == "base_seed" || key == "seed") {
      spec.base_seed = parse_number<std::uint64_t>(value, line, key);
    } else if (key == "l") {
      spec.l = parse_number<double>(value, line, key);
    } else if (key == "output_dir") {
      if (value.empty()) throw ConfigError(line, "output_dir: empty value");
      spec.output_dir = value;
    } else if (key == "forcing") {
      spec.forcing = parse_number<double>(value, line, key);
    } else if (key == "spinup_time") {
      spec.spinup_time = parse_number<double>(value, line, key);
    } else if (key == "stride") {
      spec.stride = parse_number<std::uint64_t>(value, line, key);
    } else if (key == "truth_stride") {
      spec.truth_stride = parse_number<std::uint64_t>(value, line, key);
    } else if (key == "burn_in") {
      spec.burn_in = parse_number<double>(value, line, key);
    } else if (key == "component") {
      spec.component = parse_number<std::size_t>(value, line, key);
    } else if (key == "inflation") {
      spec.inflation = parse_bool(value, line, key);
    } else if (key == "stiffness_guard") {
      spec.stiffness_guard = parse_bool(value, line, key);
    } else if (key == "threads") {
      spec.threads = parse_number<int>(value, line, key);
    } else {
      throw ConfigError(line, "unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

double stiffness_estimate(const ExperimentSpec& spec, double epsilon, std::size_t n) {
  const auto phi = build_localization(n, spec.l);
  const auto loc = localization_stats(phi);
  const auto model = DriftModel::lorenz96(n, spec.forcing);
  const auto b = stability_bounds(model.c_f(), 1.0, 1.0, loc.c_phi, epsilon);
  const double rate = std::max(loc.c_phi * std::max(1.0, b.lambda_max) / epsilon, 1.0 / b.lambda_min);
  return spec.dt * rate;
}

// ---------------------------------------------------------------------------
// Errors and metrics

ErrorSeries error_series(const std::vector<std::uint64_t>& truth_steps,
                         const std::vector<Vector>& truth,
                         const std::vector<std::uint64_t>& mean_steps,
                         const std::vector<Vector>& means, double dt) {
  if (truth_steps.size() != truth.size() || mean_steps.size() != means.size()) {
    throw std::invalid_argument("error_series: step and state lists differ in length");
  }
  std::map<std::uint64_t, std::size_t> at;
  for (std::size_t i = 0; i < truth_steps.size(); ++i) at[truth_steps[i]] = i;
  ErrorSeries out;
  for (std::size_t k = 0; k < mean_steps.size(); ++k) {
    const auto it = at.find(mean_steps[k]);
    if (it == at.end()) {
      throw std::invalid_argument("error_series: no truth state at step " +
                                  std::to_string(mean_steps[k]));
    }
    const Vector& x = truth[it->second];
    if (x.size() != means[k].size()) throw std::invalid_argument("error_series: dimension mismatch");
    out.steps.push_back(mean_steps[k]);
    out.t.push_back(static_cast<double>(mean_steps[k]) * dt);
    out.e.push_back(x - means[k]);
  }
  return out;
}

MetricsAccumulator::MetricsAccumulator(std::size_t n, double burn_in)
    : burn_in_(burn_in), comp_sum_(Vector::Zero(static_cast<Eigen::Index>(n))) {}

void MetricsAccumulator::add(double t, const VecRef& e) {
  if (t < burn_in_) return;
  if (e.size() != comp_sum_.size()) throw std::invalid_argument("metrics: error length mismatch");
  double sq = 0.0;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double ei2 = e(i) * e(i);
    sq += ei2;
    comp_sum_(i) += ei2;
    comp_sup_ = std::max(comp_sup_, ei2);
  }
  sum_sq_ += sq;
  sup_ = std::max(sup_, sq);
  ++count_;
}

MetricsRecord MetricsAccumulator::finish(std::string run_id) const {
  if (count_ == 0) throw std::runtime_error("metrics: no samples after burn-in");
  MetricsRecord r;
  r.run_id = std::move(run_id);
  r.samples = count_;
  const double c = static_cast<double>(count_);
  r.mse_time_avg = sum_sq_ / c;
  r.mse_time_avg_per_dim = r.mse_time_avg / static_cast<double>(comp_sum_.size());
  r.component_mse = comp_sum_ / c;
  r.pathwise_sup = sup_;
  r.pathwise_component_sup = comp_sup_;
  return r;
}

MetricsRecord metrics(const ErrorSeries& errors, double burn_in, std::string run_id) {
  if (errors.e.empty()) throw std::runtime_error("metrics: empty error series");
  MetricsAccumulator acc(static_cast<std::size_t>(errors.e.front().size()), burn_in);
  for (std::size_t k = 0; k < errors.e.size(); ++k) acc.add(errors.t[k], errors.e[k]);
  return acc.finish(std::move(run_id));
}

// ---------------------------------------------------------------------------
// Fits

std::optional<LinearFit> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("linear_fit: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) return std::nullopt;
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return f;
}

std::optional<LinearFit> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("loglog_fit: length mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::domain_error("loglog_fit: values must be > 0");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  return linear_fit(lx, ly);
}

std::optional<LogFit> log_fit(const std::vector<double>& horizon, const std::vector<double>& y) {
  if (horizon.size() != y.size()) throw std::invalid_argument("log_fit: length mismatch");
  std::vector<double> lx;
  for (double h : horizon) {
    if (!(h > 0.0)) throw std::domain_error("log_fit: horizons must be > 0");
    lx.push_back(std::log(h));
  }
  const auto lin = linear_fit(lx, y);
  if (!lin) return std::nullopt;
  LogFit f;
  f.a = lin->intercept;
  f.b = lin->slope;
  double ss = 0.0, my = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - (f.a + f.b * lx[i]);
    ss += r * r;
    my += y[i];
  }
  const double cnt = static_cast<double>(y.size());
  f.residual_rms = std::sqrt(ss / cnt);
  my /= cnt;
  f.residual_rms_rel = my != 0.0 ? f.residual_rms / std::abs(my) : 0.0;
  return f;
}

// ---------------------------------------------------------------------------
// Twin experiments

namespace {

/// Truth and observations generated in lockstep; state() is the truth at the index of
/// the next observation.
class TwinSource : public ObservationSource {
 public:
  TwinSource(const DriftModel& model, ObsNoiseSpec obs, double dt, std::uint64_t steps,
             TruthState x0, std::uint64_t seed)
      : model_(model),
        obs_(std::move(obs)),
        dt_(dt),
        steps_(steps),
        state_(std::move(x0)),
        truth_rng_(make_engine(seed, Stream::truth)),
        obs_rng_(make_engine(seed, Stream::observation)) {}

  std::size_t n() const override { return obs_.n(); }
  double dt() const override { return dt_; }
  double epsilon() const override { return obs_.epsilon; }

  bool next(ObservationRecord& rec) override {
    if (k_ == steps_) return false;
    rec = observe_increment(state_, dt_, obs_, obs_rng_, k_);
    state_ = step_truth(state_, dt_, model_, truth_rng_);
    ++k_;
    check_finite(state_.x, k_, "truth state");
    return true;
  }

  const Vector& state() const { return state_.x; }

 private:
  const DriftModel& model_;
  ObsNoiseSpec obs_;
  double dt_;
  std::uint64_t steps_;
  TruthState state_;
  RandomEngine truth_rng_;
  RandomEngine obs_rng_;
  std::uint64_t k_ = 0;
};

}  // namespace

TwinResult run_twin(const TwinSpec& spec) {
  if (spec.component < 1 || spec.component > spec.n) {
    throw std::invalid_argument("run_twin: component out of range");
  }
  const auto model = DriftModel::lorenz96(spec.n, spec.forcing);
  const auto obs = ObsNoiseSpec::isotropic(spec.n, spec.epsilon);
  const FilterConfig cfg(build_localization(spec.n, spec.l), obs, spec.dt, spec.inflation, -1.0,
                         spec.stiffness_guard);

  auto x0 = spinup_init(spec.n, spec.forcing, spec.spinup_time, spec.seed);
  auto ens_rng = make_engine(spec.seed, Stream::ensemble);
  Ensemble init = init_ensemble(x0.x, spec.m, ens_rng);
  TwinSource source(model, obs, spec.dt, spec.steps, std::move(x0), spec.seed);

  const auto loc = localization_stats(cfg.phi());
  const auto bounds = stability_bounds(model.c_f(), obs.omega_min(), obs.omega_max(), loc.c_phi,
                                       spec.epsilon);
  TwinResult out;
  out.burn_in = spec.burn_in >= 0.0 ? spec.burn_in : 10.0 * bounds.t_star_lower;

  MetricsAccumulator acc(spec.n, out.burn_in);
  Vector e(static_cast<Eigen::Index>(spec.n));
  RunOptions opts;
  opts.stride = spec.stride;
  opts.keep_means = false;
  opts.on_record = [&](std::uint64_t, double t, const Vector& mean) {
    e = source.state() - mean;
    out.times.push_back(t);
    out.sq_norm.push_back(e.squaredNorm());
    acc.add(t, e);
  };
  FilterRun run = run_filter(source, cfg, model, std::move(init), opts);

  out.metrics = acc.finish("twin");
  out.bounds = run.bounds;
  out.p0_max = run.p0_max;
  double p_max_max = 0.0;
  double p_min_min = std::numeric_limits<double>::infinity();
  for (const auto& row : run.diagnostics) {
    if (row.t < out.burn_in) continue;
    p_max_max = std::max(p_max_max, row.p_max);
    p_min_min = std::min(p_min_min, row.p_min);
  }
  out.metrics.p_max_max = p_max_max;
  out.metrics.p_min_min = std::isfinite(p_min_min) ? p_min_min : 0.0;
  out.metrics.upper_violations = run.violations.upper;
  out.metrics.lower_violations = run.violations.lower;
  out.metrics.inverse_violations = run.violations.inverse;
  out.diagnostics = std::move(run.diagnostics);
  return out;
}

double mse_per_dim_with_burn_in(const TwinResult& run, std::size_t n, double burn_in) {
  double sum = 0.0;
  std::uint64_t count = 0;
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    if (run.times[k] < burn_in) continue;
    sum += run.sq_norm[k];
    ++count;
  }
  if (count == 0) throw std::runtime_error("no samples after burn-in");
  return sum / static_cast<double>(count) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Sweeps

TwinSpec twin_for_cell(const ExperimentSpec& spec, std::size_t n, double epsilon,
                       std::uint64_t steps, std::uint64_t cell, std::uint64_t repeat) {
  TwinSpec t;
  t.n = n;
  t.m = spec.m;
  t.epsilon = epsilon;
  t.dt = spec.dt;
  t.steps = steps;
  t.l = spec.l;
  t.forcing = spec.forcing;
  t.spinup_time = spec.spinup_time;
  t.seed = cell_seed(spec.base_seed, cell, repeat);
  t.stride = spec.stride;
  t.burn_in = spec.burn_in;
  t.inflation = spec.inflation;
  t.stiffness_guard = spec.stiffness_guard;
  t.component = spec.component;
  return t;
}

namespace {

struct CellDef {
  std::size_t n;
  double epsilon;
  std::uint64_t steps;
  double horizon;
};

std::string one_line(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  }
  return out;
}

SweepResult run_cells(const ExperimentSpec& spec, Scenario scenario,
                      const std::vector<CellDef>& cells) {
  spec.validate();
  if (spec.stiffness_guard) {
    for (const auto& c : cells) {
      const double est = stiffness_estimate(spec, c.epsilon, c.n);
      if (est > 0.5) {
        std::ostringstream os;
        os << "dt: estimated dt * rate = " << est << " > 0.5 at epsilon = " << c.epsilon
           << ", nx = " << c.n << "; use dt <= " << spec.dt * 0.5 / est;
        throw ConfigError(0, os.str());
      }
    }
  }

  SweepResult result;
  result.scenario = scenario;
  const std::uint64_t reps = spec.repeats;
  result.rows.resize(cells.size() * reps);
  const auto jobs = static_cast<std::int64_t>(result.rows.size());

  // Each job owns its output slot, so the outcome does not depend on scheduling.
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t j = 0; j < jobs; ++j) {
    const auto cell = static_cast<std::uint64_t>(j) / reps;
    const auto rep = static_cast<std::uint64_t>(j) % reps;
    const CellDef& c = cells[cell];
    SweepRow& row = result.rows[static_cast<std::size_t>(j)];
    row.cell = cell;
    row.repeat = rep;
    row.epsilon = c.epsilon;
    row.nx = c.n;
    row.horizon = c.horizon;
    const TwinSpec ts = twin_for_cell(spec, c.n, c.epsilon, c.steps, cell, rep);
    row.seed = ts.seed;
    try {
      TwinResult r = run_twin(ts);
      row.burn_in = r.burn_in;
      row.metrics = std::move(r.metrics);
      row.metrics.run_id = "c" + std::to_string(cell) + "r" + std::to_string(rep);
      row.component_mse = row.metrics.component_mse(static_cast<Eigen::Index>(spec.component - 1));
      row.status = "ok";
    } catch (const std::exception& e) {
      row.status = "failed: " + one_line(e.what());
    }
  }

  return result;
}

/// Averages the ok repeats of every cell, in ascending cell order.
void aggregate_cells(SweepResult& result) {
  std::map<std::uint64_t, CellSummary> by_cell;
  for (const SweepRow& row : result.rows) {
    auto [it, fresh] = by_cell.try_emplace(row.cell);
    CellSummary& s = it->second;
    if (fresh) {
      s.cell = row.cell;
      s.epsilon = row.epsilon;
      s.nx = row.nx;
      s.horizon = row.horizon;
    }
    if (row.status != "ok") continue;
    ++s.ok_runs;
    s.mse_per_dim += row.metrics.mse_time_avg_per_dim;
    s.mse_total += row.metrics.mse_time_avg;
    s.component_mse += row.component_mse;
    s.pathwise_sup += row.metrics.pathwise_sup;
  }
  result.cells.clear();
  for (auto& [ci, s] : by_cell) {
    if (s.ok_runs > 0) {
      const double k = static_cast<double>(s.ok_runs);
      s.mse_per_dim /= k;
      s.mse_total /= k;
      s.component_mse /= k;
      s.pathwise_sup /= k;
    } else {
      result.notes.push_back("cell " + std::to_string(ci) + ": every repeat failed");
    }
    result.cells.push_back(s);
  }
}

std::vector<const CellSummary*> ok_cells(SweepResult& r) {
  aggregate_cells(r);
  std::vector<const CellSummary*> out;
  for (const auto& c : r.cells) {
    if (c.ok_runs > 0) out.push_back(&c);
  }
  return out;
}

}  // namespace

void summarize_eps(SweepResult& result) {
  std::vector<double> x, y;
  for (const auto* c : ok_cells(result)) {
    x.push_back(c->epsilon);
    y.push_back(c->mse_per_dim);
  }
  result.eps_fit = x.size() >= 2 ? loglog_fit(x, y) : std::nullopt;
  if (!result.eps_fit) result.notes.push_back("epsilon slope undefined: fewer than two valid cells");
}

void summarize_dim(SweepResult& result) {
  std::vector<double> x, y, comp;
  for (const auto* c : ok_cells(result)) {
    x.push_back(static_cast<double>(c->nx));
    y.push_back(c->mse_total);
    comp.push_back(c->component_mse);
  }
  result.dim_fit = x.size() >= 2 ? linear_fit(x, y) : std::nullopt;
  if (!result.dim_fit) result.notes.push_back("dimension fit undefined: fewer than two valid cells");
  if (!comp.empty()) {
    const auto [lo, hi] = std::minmax_element(comp.begin(), comp.end());
    if (*lo > 0.0) {
      result.component_flatness = *hi / *lo;
    } else {
      result.notes.push_back("component flatness undefined: zero component error");
    }
  }
}

void summarize_time(SweepResult& result) {
  std::vector<double> x, y;
  const CellSummary* shortest = nullptr;
  const CellSummary* longest = nullptr;
  for (const auto* c : ok_cells(result)) {
    x.push_back(c->horizon);
    y.push_back(c->pathwise_sup);
    if (!shortest || c->horizon < shortest->horizon) shortest = c;
    if (!longest || c->horizon > longest->horizon) longest = c;
  }
  result.time_fit = x.size() >= 2 ? log_fit(x, y) : std::nullopt;
  if (!result.time_fit) result.notes.push_back("log-horizon fit undefined: fewer than two valid cells");
  if (shortest && longest && shortest != longest && shortest->pathwise_sup > 0.0) {
    result.sup_growth = longest->pathwise_sup / shortest->pathwise_sup;
  }
}

SweepResult eps_sweep(const ExperimentSpec& spec) {
  std::vector<CellDef> cells;
  for (double e : spec.epsilon) cells.push_back({spec.nx.front(), e, spec.steps, 0.0});
  auto r = run_cells(spec, Scenario::eps_sweep, cells);
  summarize_eps(r);
  return r;
}

SweepResult dim_sweep(const ExperimentSpec& spec) {
  std::vector<CellDef> cells;
  for (auto n : spec.nx) cells.push_back({n, spec.epsilon.front(), spec.steps, 0.0});
  auto r = run_cells(spec, Scenario::dim_sweep, cells);
  summarize_dim(r);
  return r;
}

SweepResult time_sweep(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.horizon.empty()) throw ConfigError(0, "horizon: time sweep needs a T grid");
  if (spec.repeats < 2) throw ConfigError(0, "repeats: time sweep averages over at least 2 repeats");
  std::vector<CellDef> cells;
  for (double h : spec.horizon) {
    const auto steps = static_cast<std::uint64_t>(std::llround(h / spec.dt));
    cells.push_back({spec.nx.front(), spec.epsilon.front(), steps, h});
  }
  auto r = run_cells(spec, Scenario::time_sweep, cells);
  summarize_time(r);
  return r;
}

// ---------------------------------------------------------------------------
// Persistence

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  header = split_list(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_list(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error(path.string() + ": row has " + std::to_string(cells.size()) +
                               " fields, header has " + std::to_string(header.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::runtime_error("bad number '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoull(s, &pos);
  if (pos != s.size()) throw std::runtime_error("bad integer '" + s + "'");
  return v;
}

const char* kSweepHeader =
    "cell,repeat,seed,epsilon,nx,horizon,status,burn_in,samples,mse_time_avg_per_dim,"
    "mse_time_avg,component_mse,pathwise_sup,pathwise_component_sup,p_max_max,p_min_min,"
    "upper_violations,lower_violations,inverse_violations";

}  // namespace

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result) {
  auto out = open_out(path);
  out << kSweepHeader << '\n';
  for (const auto& r : result.rows) {
    const auto& m = r.metrics;
    out << r.cell << ',' << r.repeat << ',' << r.seed << ',' << format_double(r.epsilon) << ','
        << r.nx << ',' << format_double(r.horizon) << ',' << r.status << ','
        << format_double(r.burn_in) << ',' << m.samples << ','
        << format_double(m.mse_time_avg_per_dim) << ',' << format_double(m.mse_time_avg) << ','
        << format_double(r.component_mse) << ',' << format_double(m.pathwise_sup) << ','
        << format_double(m.pathwise_component_sup) << ',' << format_double(m.p_max_max) << ','
        << format_double(m.p_min_min) << ',' << m.upper_violations << ',' << m.lower_violations
        << ',' << m.inverse_violations << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
  std::vector<std::string> header;
  const auto rows = read_csv(path, header);
  if (header != split_list(kSweepHeader)) throw std::runtime_error(path.string() + ": unexpected header");
  std::vector<SweepRow> out;
  for (const auto& c : rows) {
    SweepRow r;
    r.cell = to_u64(c[0]);
    r.repeat = to_u64(c[1]);
    r.seed = to_u64(c[2]);
    r.epsilon = to_double(c[3]);
    r.nx = to_u64(c[4]);
    r.horizon = to_double(c[5]);
    r.status = c[6];
    r.burn_in = to_double(c[7]);
    r.metrics.run_id = "c" + c[0] + "r" + c[1];
    r.metrics.samples = to_u64(c[8]);
    r.metrics.mse_time_avg_per_dim = to_double(c[9]);
    r.metrics.mse_time_avg = to_double(c[10]);
    r.component_mse = to_double(c[11]);
    r.metrics.pathwise_sup = to_double(c[12]);
    r.metrics.pathwise_component_sup = to_double(c[13]);
    r.metrics.p_max_max = to_double(c[14]);
    r.metrics.p_min_min = to_double(c[15]);
    r.metrics.upper_violations = to_u64(c[16]);
    r.metrics.lower_violations = to_u64(c[17]);
    r.metrics.inverse_violations = to_u64(c[18]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary_csv(const std::filesystem::path& path, const SweepResult& result) {
  auto out = open_out(path);
  out << "cell,epsilon,nx,horizon,ok_runs,mse_per_dim,mse_total,component_mse,pathwise_sup\n";
  for (const auto& c : result.cells) {
    out << c.cell << ',' << format_double(c.epsilon) << ',' << c.nx << ','
        << format_double(c.horizon) << ',' << c.ok_runs << ',' << format_double(c.mse_per_dim)
        << ',' << format_double(c.mse_total) << ',' << format_double(c.component_mse) << ','
        << format_double(c.pathwise_sup) << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  const Eigen::Index n = records.empty() ? 0 : records.front().component_mse.size();
  for (const auto& r : records) {
    if (r.component_mse.size() != n) throw std::invalid_argument("write_metrics_csv: mixed dimensions");
  }
  auto out = open_out(path);
  out << "run_id,samples,mse_time_avg_per_dim,mse_time_avg,pathwise_sup,pathwise_component_sup,"
         "p_max_max,p_min_min,upper_violations,lower_violations,inverse_violations";
  for (Eigen::Index i = 0; i < n; ++i) out << ",component_mse_" << (i + 1);
  out << '\n';
  for (const auto& r : records) {
    out << one_line(r.run_id) << ',' << r.samples << ',' << format_double(r.mse_time_avg_per_dim)
        << ',' << format_double(r.mse_time_avg) << ',' << format_double(r.pathwise_sup) << ','
        << format_double(r.pathwise_component_sup) << ',' << format_double(r.p_max_max) << ','
        << format_double(r.p_min_min) << ',' << r.upper_violations << ',' << r.lower_violations
        << ',' << r.inverse_violations;
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(r.component_mse(i));
    out << '\n';
  }
}

std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::vector<std::string> header;
  const auto rows = read_csv(path, header);
  if (header.size() < 11 || header[0] != "run_id") {
    throw std::runtime_error(path.string() + ": not a metrics file");
  }
  const std::size_t n = header.size() - 11;
  std::vector<MetricsRecord> out;
  for (const auto& c : rows) {
    MetricsRecord r;
    r.run_id = c[0];
    r.samples = to_u64(c[1]);
    r.mse_time_avg_per_dim = to_double(c[2]);
    r.mse_time_avg = to_double(c[3]);
    r.pathwise_sup = to_double(c[4]);
    r.pathwise_component_sup = to_double(c[5]);
    r.p_max_max = to_double(c[6]);
    r.p_min_min = to_double(c[7]);
    r.upper_violations = to_u64(c[8]);
    r.lower_violations = to_u64(c[9]);
    r.inverse_violations = to_u64(c[10]);
    r.component_mse.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) r.component_mse(static_cast<Eigen::Index>(i)) = to_double(c[11 + i]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<DiagnosticsRow>& rows) {
  auto out = open_out(path);
  out << "step,t,p_max,p_min,alpha,beta,di_residual\n";
  for (const auto& r : rows) {
    out << r.step << ',' << format_double(r.t) << ',' << format_double(r.p_max) << ','
        << format_double(r.p_min) << ',' << format_double(r.alpha) << ',' << format_double(r.beta)
        << ',' << format_double(r.di_residual) << '\n';
  }
}

std::vector<std::filesystem::path> write_sweep_outputs(const std::filesystem::path& dir,
                                                       const ExperimentSpec& spec,
                                                       const SweepResult& result) {
  const std::string stem = to_string(result.scenario);
  const auto rows_path = dir / (stem + ".csv");
  const auto summary_path = dir / (stem + "_summary.csv");
  write_sweep_csv(rows_path, result);
  write_summary_csv(summary_path, result);

  nlohmann::ordered_json meta;
  meta["scenario"] = stem;
  meta["epsilon"] = spec.epsilon;
  meta["nx"] = spec.nx;
  meta["horizon"] = spec.horizon;
  meta["m"] = spec.m;
  meta["dt"] = spec.dt;
  meta["steps"] = spec.steps;
  meta["repeats"] = spec.repeats;
  meta["base_seed"] = spec.base_seed;
  meta["l"] = spec.l;
  meta["forcing"] = spec.forcing;
  meta["spinup_time"] = spec.spinup_time;
  meta["stride"] = spec.stride;
  meta["burn_in"] = spec.burn_in;
  meta["component"] = spec.component;
  meta["inflation"] = spec.inflation;
  meta["stiffness_guard"] = spec.stiffness_guard;
  auto& seeds = meta["seeds"] = nlohmann::ordered_json::array();
  for (const auto& r : result.rows) {
    seeds.push_back({{"cell", r.cell}, {"repeat", r.repeat}, {"seed", r.seed}, {"status", r.status}});
  }
  auto& fit = meta["fit"] = nlohmann::ordered_json::object();
  if (result.eps_fit) {
    fit["eps_slope"] = result.eps_fit->slope;
    fit["eps_intercept"] = result.eps_fit->intercept;
    fit["eps_r2"] = result.eps_fit->r2;
  }
  if (result.dim_fit) {
    fit["dim_slope"] = result.dim_fit->slope;
    fit["dim_intercept"] = result.dim_fit->intercept;
    fit["dim_r2"] = result.dim_fit->r2;
  }
  if (result.component_flatness) fit["component_flatness"] = *result.component_flatness;
  if (result.time_fit) {
    fit["log_a"] = result.time_fit->a;
    fit["log_b"] = result.time_fit->b;
    fit["residual_rms"] = result.time_fit->residual_rms;
    fit["residual_rms_rel"] = result.time_fit->residual_rms_rel;
  }
  if (result.sup_growth) fit["sup_growth"] = *result.sup_growth;
  meta["notes"] = result.notes;

  auto out = open_out(dir / (stem + ".json"));
  out << meta.dump(2) << '\n';
  return {rows_path, summary_path};
}

}  // namespace enkbf
