#pragma once

#include <cstdint>
#include <random>

#include "enkbf/locmat.hpp"

namespace enkbf {

using RandomEngine = std::mt19937_64;

/// Fixed stream indices; every run derives its engines from (seed, stream).
enum class Stream : std::uint64_t {
  truth = 0,
  observation = 1,
  spinup = 2,
  ensemble = 3,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Independent engine for one (seed, stream) pair.
RandomEngine make_engine(std::uint64_t seed, std::uint64_t stream);
inline RandomEngine make_engine(std::uint64_t seed, Stream stream) {
  return make_engine(seed, static_cast<std::uint64_t>(stream));
}

/// Seed of repeat j within sweep cell c.
std::uint64_t cell_seed(std::uint64_t base_seed, std::uint64_t cell, std::uint64_t repeat);

/// Fills v with i.i.d. standard normals, in index order.
void fill_normal(RandomEngine& rng, Eigen::Ref<Vector> v);

}  // namespace enkbf
