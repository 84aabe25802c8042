#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "enkbf/experiment.hpp"
#include "enkbf/verify.hpp"

namespace enkbf::app {

/// Command-line overrides applied on top of a parsed config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<std::uint64_t> stride;
};

ExperimentSpec load_spec(const std::filesystem::path& config, const Overrides& ov);

/// Applies the thread setting to the OpenMP runtime (0 keeps the default).
void apply_threads(int threads);

struct CommandResult {
  int exit_code = 0;
  std::vector<std::filesystem::path> files;  // outputs written
};

/// Truth and observation streams for nx[0], epsilon[0].
CommandResult simulate(const ExperimentSpec& spec, std::ostream& log);

/// Filters an observation stream. With a truth trajectory, also writes error metrics.
CommandResult filter(const ExperimentSpec& spec, const std::filesystem::path& obs,
                     const std::optional<std::filesystem::path>& truth, std::ostream& log);

/// kind is "eps", "dim" or "time".
CommandResult experiment(const std::string& kind, const ExperimentSpec& spec, std::ostream& log);

CommandResult verify(const std::string& selector, std::ostream& log,
                     const VerifyOptions& opts = {});

}  // namespace enkbf::app
