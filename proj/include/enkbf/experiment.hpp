#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "enkbf/filter.hpp"

namespace enkbf {

// ---------------------------------------------------------------------------
// Configuration

enum class Scenario { single, eps_sweep, dim_sweep, time_sweep };

std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

/// Parse or validation failure; line() is 0 for whole-file validation errors.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ExperimentSpec {
  Scenario scenario = Scenario::single;
  std::vector<double> epsilon{0.01};
  std::vector<std::size_t> nx{40};
  std::vector<double> horizon;  // T grid of the time sweep
  std::size_t m = 10;
  double dt = 1e-4;
  std::uint64_t steps = 200000;
  std::uint64_t repeats = 1;
  std::uint64_t base_seed = 1;
  double l = 1.4;
  std::string output_dir = "out";
  double forcing = 8.0;
  double spinup_time = 10.0;
  std::uint64_t stride = 10;       // error sampling stride
  std::uint64_t truth_stride = 1;  // simulate command
  double burn_in = -1.0;           // negative: 10 * t_star_lower of the run
  std::size_t component = 11;      // 1-based index for component metrics
  bool inflation = true;
  bool stiffness_guard = true;
  int threads = 0;                 // 0: OpenMP default

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// `key = value` lines, `#` comments, comma-separated lists. Unknown keys are rejected.
ExperimentSpec parse_config_text(const std::string& text);
ExperimentSpec parse_config(const std::filesystem::path& path);

/// Conservative up-front stiffness estimate for (epsilon, n) using the stability
/// envelope and a unit initial spread: dt * max(C_phi w_max max(1, lambda_max)/eps, 1/lambda_min).
double stiffness_estimate(const ExperimentSpec& spec, double epsilon, std::size_t n);

// ---------------------------------------------------------------------------
// Errors and metrics

struct ErrorSeries {
  std::vector<std::uint64_t> steps;
  std::vector<double> t;
  std::vector<Vector> e;
};

/// e_t = truth - mean at matching step indices. Throws on misalignment.
ErrorSeries error_series(const std::vector<std::uint64_t>& truth_steps,
                         const std::vector<Vector>& truth,
                         const std::vector<std::uint64_t>& mean_steps,
                         const std::vector<Vector>& means, double dt);

struct MetricsRecord {
  std::string run_id;
  std::uint64_t samples = 0;
  double mse_time_avg_per_dim = 0.0;
  double mse_time_avg = 0.0;
  Vector component_mse;
  double pathwise_sup = 0.0;
  double pathwise_component_sup = 0.0;
  double p_max_max = 0.0;
  double p_min_min = 0.0;
  std::uint64_t upper_violations = 0;
  std::uint64_t lower_violations = 0;
  std::uint64_t inverse_violations = 0;
};

/// Streaming form of metrics(): samples with t >= burn_in contribute.
class MetricsAccumulator {
 public:
  MetricsAccumulator(std::size_t n, double burn_in);
  void add(double t, const VecRef& e);
  MetricsRecord finish(std::string run_id) const;
  std::uint64_t samples() const { return count_; }

 private:
  double burn_in_;
  std::uint64_t count_ = 0;
  double sum_sq_ = 0.0;
  Vector comp_sum_;
  double sup_ = 0.0;
  double comp_sup_ = 0.0;
};

MetricsRecord metrics(const ErrorSeries& errors, double burn_in, std::string run_id = "run");

// ---------------------------------------------------------------------------
// Fits

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least squares y = a + b x; nullopt for fewer than two distinct x.
std::optional<LinearFit> linear_fit(const std::vector<double>& x, const std::vector<double>& y);
std::optional<LinearFit> loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

struct LogFit {
  double a = 0.0;
  double b = 0.0;
  double residual_rms = 0.0;
  double residual_rms_rel = 0.0;  // residual RMS / mean(y)
};

/// Least squares y = a + b log(T).
std::optional<LogFit> log_fit(const std::vector<double>& horizon, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Twin experiments

struct TwinSpec {
  std::size_t n = 40;
  std::size_t m = 10;
  double epsilon = 0.01;
  double dt = 1e-4;
  std::uint64_t steps = 200000;
  double l = 1.4;
  double forcing = 8.0;
  double spinup_time = 10.0;
  std::uint64_t seed = 1;
  std::uint64_t stride = 10;
  double burn_in = -1.0;
  bool inflation = true;
  bool stiffness_guard = true;
  std::size_t component = 11;
};

struct TwinResult {
  MetricsRecord metrics;
  double burn_in = 0.0;
  StabilityBounds bounds;
  double p0_max = 0.0;
  std::vector<double> times;      // sampled error times
  std::vector<double> sq_norm;    // ||e_t||^2 at those times
  std::vector<DiagnosticsRow> diagnostics;
};

/// Simulates truth and observations in lockstep with the filter. Seed streams are
/// derived from spec.seed; the ensemble starts at the spun-up truth plus N(0, I).
TwinResult run_twin(const TwinSpec& spec);

/// Re-evaluates the per-dimension time-averaged MSE of a finished run with another burn-in.
double mse_per_dim_with_burn_in(const TwinResult& run, std::size_t n, double burn_in);

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  std::uint64_t cell = 0;
  std::uint64_t repeat = 0;
  std::uint64_t seed = 0;
  double epsilon = 0.0;
  std::size_t nx = 0;
  double horizon = 0.0;
  std::string status = "ok";
  double burn_in = 0.0;
  MetricsRecord metrics;
  double component_mse = 0.0;  // of spec.component
};

struct CellSummary {
  std::uint64_t cell = 0;
  double epsilon = 0.0;
  std::size_t nx = 0;
  double horizon = 0.0;
  std::uint64_t ok_runs = 0;
  double mse_per_dim = 0.0;     // mean over ok repeats
  double mse_total = 0.0;
  double component_mse = 0.0;
  double pathwise_sup = 0.0;
};

struct SweepResult {
  Scenario scenario = Scenario::single;
  std::vector<SweepRow> rows;
  std::vector<CellSummary> cells;
  // eps sweep
  std::optional<LinearFit> eps_fit;  // log-log of mse_per_dim vs epsilon
  // dim sweep
  std::optional<LinearFit> dim_fit;  // mse_total vs nx
  std::optional<double> component_flatness;  // max/min component mse over cells
  // time sweep
  std::optional<LogFit> time_fit;
  std::optional<double> sup_growth;  // sup at largest T / sup at smallest T
  std::vector<std::string> notes;
};

/// Builds the twin spec of (cell, repeat) from the experiment spec.
TwinSpec twin_for_cell(const ExperimentSpec& spec, std::size_t n, double epsilon,
                       std::uint64_t steps, std::uint64_t cell, std::uint64_t repeat);

SweepResult eps_sweep(const ExperimentSpec& spec);
SweepResult dim_sweep(const ExperimentSpec& spec);
SweepResult time_sweep(const ExperimentSpec& spec);

/// Fit/report stages on already-computed rows (used directly by pipeline self-tests).
void summarize_eps(SweepResult& result);
void summarize_dim(SweepResult& result);
void summarize_time(SweepResult& result);

// ---------------------------------------------------------------------------
// Persistence

/// Decimal text with 17 significant digits (exact double round trip).
std::string format_double(double v);

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& result);
void write_summary_csv(const std::filesystem::path& path, const SweepResult& result);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

void write_diagnostics_csv(const std::filesystem::path& path,
                           const std::vector<DiagnosticsRow>& rows);

/// Writes rows, summary and the JSON metadata sidecar into dir. Returns the CSV paths.
std::vector<std::filesystem::path> write_sweep_outputs(const std::filesystem::path& dir,
                                                       const ExperimentSpec& spec,
                                                       const SweepResult& result);

}  // namespace enkbf
