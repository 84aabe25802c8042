#include <benchmark/benchmark.h>

#include "enkbf/filter.hpp"

using namespace enkbf;

namespace {

struct Setup {
  FilterConfig cfg;
  DriftModel model;
  Matrix x;
  Vector dy;

  explicit Setup(std::size_t n)
      : cfg(build_localization(n, 1.4), ObsNoiseSpec::isotropic(n, 0.01), 1e-4),
        model(DriftModel::lorenz96(n)) {
    auto rng = make_engine(1, Stream::ensemble);
    x = init_ensemble(Vector::Constant(static_cast<Eigen::Index>(n), 8.0), 10, rng).particles();
    dy = x.rowwise().mean() * 1e-4;
  }
};

void BM_reference_step(benchmark::State& state) {
  Setup s(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(reference::filter_step(s.x, s.dy, s.cfg, s.model));
}

void BM_parallel_step(benchmark::State& state) {
  Setup s(static_cast<std::size_t>(state.range(0)));
  kernels::Workspace ws;
  for (auto _ : state) {
    Matrix x = s.x;
    benchmark::DoNotOptimize(kernels::filter_step_inplace(x, s.dy, s.cfg, s.model, ws));
  }
}

}  // namespace

BENCHMARK(BM_reference_step)->Arg(40)->Arg(320);
BENCHMARK(BM_parallel_step)->Arg(40)->Arg(320);

BENCHMARK_MAIN();
