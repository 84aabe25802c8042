#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "enkbf/app.hpp"

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("ENKBF_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

  CLI::App cli{"Localized ensemble Kalman-Bucy filter: simulation, filtering, experiments"};
  cli.require_subcommand(1);

  enkbf::app::Overrides ov;
  std::uint64_t seed = 0, stride = 0;
  std::string out;
  int threads = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Base seed (overrides the config)");
    sub->add_option("--out", out, "Output directory (overrides the config)");
    sub->add_option("--threads", threads, "OpenMP threads, 0 for the default")->check(CLI::NonNegativeNumber);
    sub->add_option("--stride", stride, "Record every k-th step")->check(CLI::PositiveNumber);
  };

  std::string config, obs, truth, kind, suite;

  auto* sim = cli.add_subcommand("simulate", "Generate truth and observation streams");
  sim->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);
  add_common(sim);

  auto* flt = cli.add_subcommand("filter", "Run the filter on an observation stream");
  flt->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);
  flt->add_option("--obs", obs, "Observation stream")->required()->check(CLI::ExistingFile);
  flt->add_option("--truth", truth, "Truth trajectory for error metrics")->check(CLI::ExistingFile);
  add_common(flt);

  auto* exp = cli.add_subcommand("experiment", "Run a parameter sweep");
  exp->add_option("kind", kind, "eps, dim or time")->required()->check(CLI::IsMember({"eps", "dim", "time"}));
  exp->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);
  add_common(exp);

  auto* ver = cli.add_subcommand("verify", "Run the property suites");
  ver->add_option("suite", suite, "Run only this suite");

  CLI11_PARSE(cli, argc, argv);

  try {
    if (ver->parsed()) {
      if (!suite.empty()) {
        const auto& names = enkbf::suite_names();
        if (std::find(names.begin(), names.end(), suite) == names.end()) {
          std::cerr << "unknown suite '" << suite << "'\n";
          return 1;
        }
      }
      return enkbf::app::verify(suite, std::cout).exit_code;
    }

    auto* sub = cli.get_subcommands().front();
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--out")) ov.out = out;
    if (sub->count("--threads")) ov.threads = threads;
    if (sub->count("--stride")) ov.stride = stride;
    const auto spec = enkbf::app::load_spec(config, ov);
    enkbf::app::apply_threads(spec.threads);

    enkbf::app::CommandResult r;
    if (sim->parsed()) {
      r = enkbf::app::simulate(spec, std::cout);
    } else if (flt->parsed()) {
      std::optional<std::filesystem::path> t;
      if (!truth.empty()) t = truth;
      r = enkbf::app::filter(spec, obs, t, std::cout);
    } else {
      r = enkbf::app::experiment(kind, spec, std::cout);
    }
    for (const auto& f : r.files) spdlog::info("wrote {}", f.string());
    return r.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
