#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "enkbf/app.hpp"

using namespace enkbf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "enkbf_test_app" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Gaspari-Cohn with the constant of the outer branch nudged from 4 to 4.01.
double corrupted_taper(double r) {
  if (r >= 2.0) return 0.0;
  if (r < 1.0) return gaspari_cohn(r);
  const double r2 = r * r, r3 = r2 * r, r4 = r3 * r, r5 = r4 * r;
  return r5 / 12.0 - r4 / 2.0 + 5.0 * r3 / 8.0 + 5.0 * r2 / 3.0 - 5.0 * r + 4.01 - 2.0 / (3.0 * r);
}

ExperimentSpec small_spec(const fs::path& out) {
  auto spec = parse_config_text("steps = 3000\nspinup_time = 1\nbase_seed = 4\nstride = 10\n");
  spec.output_dir = out.string();
  return spec;
}

}  // namespace

TEST(Verify, AllSuitesPass) {
  std::ostringstream log;
  const auto r = app::verify("", log);
  EXPECT_EQ(r.exit_code, 0) << log.str();
  for (const auto& name : suite_names()) {
    EXPECT_NE(log.str().find("PASS " + name), std::string::npos) << name;
  }
}

TEST(Verify, SelectorRunsOneSuite) {
  const auto results = run_suites("riccati");
  ASSERT_EQ(results.size(), 1u);
  EXPECT_EQ(results[0].name, "riccati");
  EXPECT_TRUE(results[0].passed());
  EXPECT_GT(results[0].checks, 0u);
  EXPECT_THROW(run_suite("nonsense"), std::invalid_argument);
}

TEST(Verify, CorruptedTaperIsCaught) {
  VerifyOptions opts;
  opts.taper = corrupted_taper;
  const auto r = run_suite("taper", opts);
  EXPECT_FALSE(r.passed());
  ASSERT_FALSE(r.failures.empty());
  EXPECT_NE(r.failures.front().find("discontinuity"), std::string::npos) << r.failures.front();

  std::ostringstream log;
  EXPECT_EQ(app::verify("taper", log, opts).exit_code, 1);
  EXPECT_NE(log.str().find("FAIL taper"), std::string::npos);
}

TEST(App, SimulateThenFilterIsReproducible) {
  std::ostringstream log;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = scratch(run);
    const auto spec = small_spec(dir);
    ASSERT_EQ(app::simulate(spec, log).exit_code, 0);
    const auto r = app::filter(spec, dir / "observations.bin", dir / "truth.bin", log);
    ASSERT_EQ(r.exit_code, 0);
  }
  const fs::path a = fs::temp_directory_path() / "enkbf_test_app" / "a";
  const fs::path b = fs::temp_directory_path() / "enkbf_test_app" / "b";
  // The JSON sidecars record the output paths, so only data files are compared.
  for (const char* f : {"observations.bin", "truth.bin", "filter_mean.csv", "filter_diagnostics.csv",
                        "filter_metrics.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(App, FilterCommandMatchesTwinRun) {
  const fs::path dir = scratch("twin");
  const auto spec = small_spec(dir);
  std::ostringstream log;
  ASSERT_EQ(app::simulate(spec, log).exit_code, 0);
  ASSERT_EQ(app::filter(spec, dir / "observations.bin", dir / "truth.bin", log).exit_code, 0);
  const auto from_files = read_metrics_csv(dir / "filter_metrics.csv");
  ASSERT_EQ(from_files.size(), 1u);

  // twin_for_cell derives a per-cell seed; the simulate command uses the config seed.
  TwinSpec direct = twin_for_cell(spec, 40, 0.01, spec.steps, 0, 0);
  direct.seed = spec.base_seed;
  const auto same = run_twin(direct);
  EXPECT_EQ(from_files[0].samples, same.metrics.samples);
  EXPECT_NEAR(from_files[0].mse_time_avg, same.metrics.mse_time_avg, 1e-12 * same.metrics.mse_time_avg);
}

TEST(App, FilterRejectsStrideOffTruthGrid) {
  const fs::path dir = scratch("grid");
  auto spec = small_spec(dir);
  spec.truth_stride = 4;
  std::ostringstream log;
  ASSERT_EQ(app::simulate(spec, log).exit_code, 0);
  EXPECT_THROW(app::filter(spec, dir / "observations.bin", dir / "truth.bin", log), ConfigError);
}

TEST(App, LoadSpecAppliesOverrides) {
  const fs::path dir = scratch("cfg");
  {
    std::ofstream out(dir / "x.cfg");
    out << "base_seed = 3\nstride = 5\n";
  }
  app::Overrides ov;
  ov.seed = 9;
  ov.out = (dir / "o").string();
  const auto spec = app::load_spec(dir / "x.cfg", ov);
  EXPECT_EQ(spec.base_seed, 9u);
  EXPECT_EQ(spec.stride, 5u);
  EXPECT_EQ(spec.output_dir, (dir / "o").string());
}
