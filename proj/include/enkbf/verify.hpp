#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "enkbf/locmat.hpp"

namespace enkbf {

struct SuiteResult {
  std::string name;
  std::uint64_t checks = 0;
  std::vector<std::string> failures;  // one counterexample description each
  bool passed() const { return failures.empty(); }
};

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  std::uint64_t instances = 500;    // norms, schur, taper
  std::uint64_t lyapunov_instances = 200;
  std::uint64_t mc_samples = 100000;
  std::uint64_t riccati_sets = 20;
  std::uint64_t filter_instances = 100;
  std::uint64_t run_steps = 1000;
  double tol = 1e-10;
  TaperFn taper = gaspari_cohn;     // swapped out by mutation checks
};

/// Suite names in execution order.
const std::vector<std::string>& suite_names();

/// Runs one suite by name; throws std::invalid_argument for an unknown name.
SuiteResult run_suite(const std::string& name, const VerifyOptions& opts = {});

/// Runs every suite, or only `selector` when it is non-empty.
std::vector<SuiteResult> run_suites(const std::string& selector = "", const VerifyOptions& opts = {});

}  // namespace enkbf
