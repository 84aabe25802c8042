#include "enkbf/rng.hpp"

namespace enkbf {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

RandomEngine make_engine(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32),
                    static_cast<std::uint32_t>(stream)};
  return RandomEngine(seq);
}

std::uint64_t cell_seed(std::uint64_t base_seed, std::uint64_t cell, std::uint64_t repeat) {
  return base_seed ^ splitmix64(splitmix64(cell) + repeat);
}

void fill_normal(RandomEngine& rng, Eigen::Ref<Vector> v) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
}

}  // namespace enkbf
