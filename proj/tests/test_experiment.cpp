#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "enkbf/experiment.hpp"

using namespace enkbf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "enkbf_test_experiment";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

MetricsRecord sample_record(const std::string& id, double scale) {
  MetricsRecord m;
  m.run_id = id;
  m.samples = 17;
  m.mse_time_avg_per_dim = 0.1 * scale + 1.0 / 3.0;
  m.mse_time_avg = 4.0 * scale + std::sqrt(2.0);
  m.component_mse = Vector::LinSpaced(3, 0.1, 0.7) * scale;
  m.pathwise_sup = M_PI * scale;
  m.pathwise_component_sup = std::exp(1.0) * scale;
  m.p_max_max = 1e-300 * scale;
  m.p_min_min = 123456789.123456789 * scale;
  m.upper_violations = 1;
  m.lower_violations = 2;
  m.inverse_violations = 3;
  return m;
}

}  // namespace

TEST(Config, Defaults) {
  const auto spec = parse_config_text("# nothing but a comment\n\n");
  EXPECT_EQ(spec.scenario, Scenario::single);
  EXPECT_EQ(spec.m, 10u);
  EXPECT_EQ(spec.dt, 1e-4);
  EXPECT_EQ(spec.l, 1.4);
  EXPECT_EQ(spec.nx, std::vector<std::size_t>{40});
  EXPECT_EQ(spec.burn_in, -1.0);
}

TEST(Config, ListsAndScalars) {
  const auto spec = parse_config_text(
      "scenario = eps\n"
      "epsilon = 0.01, 0.02   # two points\n"
      "nx=40\n"
      "repeats = 3\n"
      "inflation = off\n"
      "seed = 5\n");
  EXPECT_EQ(spec.scenario, Scenario::eps_sweep);
  EXPECT_EQ(spec.epsilon, (std::vector<double>{0.01, 0.02}));
  EXPECT_EQ(spec.repeats, 3u);
  EXPECT_FALSE(spec.inflation);
  EXPECT_EQ(spec.base_seed, 5u);
}

TEST(Config, ErrorsNameFieldAndLine) {
  try {
    parse_config_text("m = 10\ndt = -1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dt"), std::string::npos);
  }
  try {
    parse_config_text("m = 10\n\nbogus = 1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
  EXPECT_THROW(parse_config_text("m = 10\nm = 11\n"), ConfigError);
  EXPECT_THROW(parse_config_text("m = ten\n"), ConfigError);
  EXPECT_THROW(parse_config_text("epsilon = 0.01,\n"), ConfigError);
  EXPECT_THROW(parse_config_text("component = 41\n"), ConfigError);
  EXPECT_THROW(parse_config(scratch("missing.cfg")), std::runtime_error);
}

TEST(Config, StiffnessEstimateRejectsCoarseStep) {
  auto spec = parse_config_text("dt = 0.01\n");
  EXPECT_GT(stiffness_estimate(spec, 0.01, 40), 0.5);
  spec.dt = 1e-4;
  EXPECT_LT(stiffness_estimate(spec, 0.01, 40), 0.5);
}

TEST(ErrorSeries, Examples) {
  const std::vector<Vector> truth{Vector::Constant(2, 1.0), Vector::Constant(2, 2.0)};
  const std::vector<Vector> means{Vector::Constant(2, 0.5), Vector::Constant(2, 3.0)};
  const auto e = error_series({0, 10}, truth, {0, 10}, means, 0.1);
  ASSERT_EQ(e.e.size(), 2u);
  EXPECT_EQ(e.e[0], Vector::Constant(2, 0.5));
  EXPECT_EQ(e.e[1], Vector::Constant(2, -1.0));
  EXPECT_DOUBLE_EQ(e.t[1], 1.0);
  EXPECT_THROW(error_series({0, 10}, truth, {0, 11}, means, 0.1), std::invalid_argument);
  EXPECT_THROW(error_series({0}, {truth[0]}, {0, 10}, means, 0.1), std::invalid_argument);
}

TEST(Metrics, ConstantError) {
  ErrorSeries s;
  for (std::uint64_t k = 0; k < 5; ++k) {
    s.steps.push_back(k);
    s.t.push_back(0.1 * k);
    s.e.push_back(Vector::Constant(4, 0.5));
  }
  const auto m = metrics(s, 0.0);
  EXPECT_EQ(m.samples, 5u);
  EXPECT_DOUBLE_EQ(m.mse_time_avg_per_dim, 0.25);
  EXPECT_DOUBLE_EQ(m.mse_time_avg, 1.0);
  EXPECT_DOUBLE_EQ(m.pathwise_sup, 1.0);
  EXPECT_EQ(m.component_mse, Vector::Constant(4, 0.25));
}

TEST(Metrics, SpikeAndBurnIn) {
  ErrorSeries s;
  for (std::uint64_t k = 0; k < 4; ++k) {
    s.steps.push_back(k);
    s.t.push_back(static_cast<double>(k));
    s.e.push_back(Vector::Zero(2));
  }
  s.e[0] = Vector::Constant(2, 100.0);  // dropped by burn-in
  s.e[2](1) = 3.0;
  const auto m = metrics(s, 0.5);
  EXPECT_EQ(m.samples, 3u);
  EXPECT_DOUBLE_EQ(m.pathwise_sup, 9.0);
  EXPECT_DOUBLE_EQ(m.mse_time_avg, 3.0);
  EXPECT_DOUBLE_EQ(m.mse_time_avg_per_dim, 1.5);
  EXPECT_DOUBLE_EQ(m.component_mse(1), 3.0);
  EXPECT_DOUBLE_EQ(m.component_mse(0), 0.0);
  EXPECT_THROW(metrics(s, 10.0), std::runtime_error);
}

TEST(Metrics, TwoStepHandValues) {
  ErrorSeries s;
  s.steps = {0, 1};
  s.t = {0.0, 1.0};
  Vector a(2), b(2);
  a << 1, 2;
  b << 3, 0;
  s.e = {a, b};
  const auto m = metrics(s, 0.0, "hand");
  EXPECT_EQ(m.run_id, "hand");
  EXPECT_DOUBLE_EQ(m.mse_time_avg, (5.0 + 9.0) / 2.0);
  EXPECT_DOUBLE_EQ(m.component_mse(0), 5.0);
  EXPECT_DOUBLE_EQ(m.component_mse(1), 2.0);
  EXPECT_DOUBLE_EQ(m.pathwise_component_sup, 9.0);
}

TEST(Fits, ExactPowerLaw) {
  std::vector<double> x, y;
  for (double e : {0.0125, 0.025, 0.05, 0.1, 0.2}) {
    x.push_back(e);
    y.push_back(3.0 * std::sqrt(e));
  }
  const auto f = loglog_fit(x, y);
  ASSERT_TRUE(f.has_value());
  EXPECT_NEAR(f->slope, 0.5, 1e-6);
  EXPECT_NEAR(f->r2, 1.0, 1e-12);
  EXPECT_THROW(loglog_fit({1.0, -1.0}, {1.0, 1.0}), std::domain_error);
}

TEST(Fits, ExactLineAndDegenerateInput) {
  const auto f = linear_fit({40, 80, 160, 320}, {1, 2, 4, 8});
  ASSERT_TRUE(f.has_value());
  EXPECT_NEAR(f->slope, 1.0 / 40.0, 1e-15);
  EXPECT_NEAR(f->r2, 1.0, 1e-12);
  EXPECT_FALSE(linear_fit({1.0}, {2.0}).has_value());
  EXPECT_FALSE(linear_fit({1.0, 1.0}, {2.0, 3.0}).has_value());
}

TEST(Fits, LogHorizon) {
  std::vector<double> t{5, 10, 20, 40}, y;
  for (double h : t) y.push_back(0.3 + 0.7 * std::log(h));
  const auto f = log_fit(t, y);
  ASSERT_TRUE(f.has_value());
  EXPECT_NEAR(f->b, 0.7, 1e-6);
  EXPECT_NEAR(f->a, 0.3, 1e-6);
  EXPECT_LT(f->residual_rms_rel, 1e-12);
  EXPECT_FALSE(log_fit({5.0}, {1.0}).has_value());
}

TEST(Summaries, WorkOnFabricatedRows) {
  SweepResult r;
  r.scenario = Scenario::eps_sweep;
  std::uint64_t cell = 0;
  for (double e : {0.01, 0.04, 0.16}) {
    for (std::uint64_t rep = 0; rep < 2; ++rep) {
      SweepRow row;
      row.cell = cell;
      row.repeat = rep;
      row.epsilon = e;
      row.nx = 40;
      row.metrics.mse_time_avg_per_dim = std::sqrt(e) * (rep == 0 ? 0.9 : 1.1);
      row.metrics.mse_time_avg = 40.0 * row.metrics.mse_time_avg_per_dim;
      r.rows.push_back(row);
    }
    ++cell;
  }
  SweepRow failed = r.rows.back();
  failed.repeat = 2;
  failed.status = "failed: blow-up";
  failed.metrics.mse_time_avg_per_dim = 1e9;
  r.rows.push_back(failed);
  summarize_eps(r);
  ASSERT_EQ(r.cells.size(), 3u);
  EXPECT_EQ(r.cells[2].ok_runs, 2u);
  ASSERT_TRUE(r.eps_fit.has_value());
  EXPECT_NEAR(r.eps_fit->slope, 0.5, 1e-12);
}

TEST(Persistence, FormatDoubleRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, M_PI}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Persistence, MetricsCsvRoundTrip) {
  const std::vector<MetricsRecord> recs{sample_record("a", 1.0), sample_record("b", 7.0 / 3.0)};
  write_metrics_csv(scratch("metrics.csv"), recs);
  const auto back = read_metrics_csv(scratch("metrics.csv"));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_EQ(back[k].run_id, recs[k].run_id);
    EXPECT_EQ(back[k].samples, recs[k].samples);
    EXPECT_EQ(back[k].mse_time_avg_per_dim, recs[k].mse_time_avg_per_dim);
    EXPECT_EQ(back[k].mse_time_avg, recs[k].mse_time_avg);
    EXPECT_EQ(back[k].component_mse, recs[k].component_mse);
    EXPECT_EQ(back[k].pathwise_sup, recs[k].pathwise_sup);
    EXPECT_EQ(back[k].pathwise_component_sup, recs[k].pathwise_component_sup);
    EXPECT_EQ(back[k].p_max_max, recs[k].p_max_max);
    EXPECT_EQ(back[k].p_min_min, recs[k].p_min_min);
    EXPECT_EQ(back[k].upper_violations, 1u);
    EXPECT_EQ(back[k].lower_violations, 2u);
    EXPECT_EQ(back[k].inverse_violations, 3u);
  }
}

TEST(Persistence, SweepCsvRoundTrip) {
  SweepResult r;
  r.scenario = Scenario::dim_sweep;
  for (std::uint64_t k = 0; k < 3; ++k) {
    SweepRow row;
    row.cell = k;
    row.repeat = k % 2;
    row.seed = cell_seed(1, k, row.repeat);
    row.epsilon = 0.0125;
    row.nx = 40u << k;
    row.burn_in = 0.031 + k;
    row.metrics = sample_record("x", 1.0 + k);
    row.component_mse = 0.1 / (k + 1);
    if (k == 2) row.status = "failed: stiffness";
    r.rows.push_back(row);
  }
  write_sweep_csv(scratch("sweep.csv"), r);
  const auto back = read_sweep_csv(scratch("sweep.csv"));
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(back[k].cell, r.rows[k].cell);
    EXPECT_EQ(back[k].seed, r.rows[k].seed);
    EXPECT_EQ(back[k].nx, r.rows[k].nx);
    EXPECT_EQ(back[k].status, r.rows[k].status);
    EXPECT_EQ(back[k].burn_in, r.rows[k].burn_in);
    EXPECT_EQ(back[k].component_mse, r.rows[k].component_mse);
    EXPECT_EQ(back[k].metrics.mse_time_avg_per_dim, r.rows[k].metrics.mse_time_avg_per_dim);
    EXPECT_EQ(back[k].metrics.pathwise_sup, r.rows[k].metrics.pathwise_sup);
  }
  write_sweep_csv(scratch("sweep2.csv"), SweepResult{r.scenario, back});
  EXPECT_EQ(slurp(scratch("sweep.csv")), slurp(scratch("sweep2.csv")));
}

TEST(Twin, BurnInWindowIsStationary) {
  TwinSpec spec;
  spec.steps = 60000;
  spec.seed = 3;
  const auto run = run_twin(spec);
  const double t_star = run.bounds.t_star_lower;
  EXPECT_NEAR(run.burn_in, 10.0 * t_star, 1e-15);
  const double at5 = mse_per_dim_with_burn_in(run, spec.n, 5.0 * t_star);
  const double at20 = mse_per_dim_with_burn_in(run, spec.n, 20.0 * t_star);
  EXPECT_LT(std::abs(at20 - at5) / at5, 0.10);
  EXPECT_EQ(run.metrics.upper_violations, 0u);
  EXPECT_EQ(run.metrics.inverse_violations, 0u);
}

TEST(Twin, DeterministicForSeed) {
  TwinSpec spec;
  spec.steps = 3000;
  spec.seed = 11;
  const auto a = run_twin(spec);
  const auto b = run_twin(spec);
  EXPECT_EQ(a.metrics.mse_time_avg, b.metrics.mse_time_avg);
  EXPECT_EQ(a.sq_norm, b.sq_norm);
  spec.seed = 12;
  EXPECT_NE(run_twin(spec).metrics.mse_time_avg, a.metrics.mse_time_avg);
}

TEST(Sweep, TinyEpsSweepIsReproducible) {
  auto spec = parse_config_text(
      "scenario = eps\n"
      "epsilon = 0.05, 0.2\n"
      "steps = 2000\n"
      "repeats = 2\n"
      "spinup_time = 1\n");
  spec.output_dir = scratch("sweep_a").string();
  const auto a = eps_sweep(spec);
  write_sweep_outputs(spec.output_dir, spec, a);
  spec.output_dir = scratch("sweep_b").string();
  const auto b = eps_sweep(spec);
  write_sweep_outputs(spec.output_dir, spec, b);
  ASSERT_EQ(a.rows.size(), 4u);
  for (const auto& row : a.rows) EXPECT_EQ(row.status, "ok");
  EXPECT_EQ(a.rows[1].seed, cell_seed(spec.base_seed, 0, 1));
  EXPECT_TRUE(a.eps_fit.has_value());
  for (const char* f : {"eps_sweep.csv", "eps_sweep_summary.csv", "eps_sweep.json"}) {
    EXPECT_EQ(slurp(scratch("sweep_a") / f), slurp(scratch("sweep_b") / f)) << f;
  }
}

TEST(Sweep, TimeSweepNeedsRepeats) {
  auto spec = parse_config_text("scenario = time\nhorizon = 0.1, 0.2\nrepeats = 1\n");
  EXPECT_THROW(time_sweep(spec), ConfigError);
}

TEST(Sweep, CoarseStepRejectedUpFront) {
  auto spec = parse_config_text("scenario = eps\nepsilon = 0.0001\ndt = 0.01\nsteps = 10\n");
  try {
    eps_sweep(spec);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("dt"), std::string::npos);
  }
}
