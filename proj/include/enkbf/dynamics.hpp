#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "enkbf/model.hpp"
#include "enkbf/rng.hpp"

namespace enkbf {

/// A non-finite state was produced. Carries the step index at which it appeared.
class BlowUpError : public std::runtime_error {
 public:
  BlowUpError(const std::string& what, std::uint64_t step);
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

struct SimConfig {
  std::size_t n = 40;
  double dt = 1e-4;
  std::uint64_t steps = 1;
  std::uint64_t seed = 1;
  double spinup_time = 10.0;
  double forcing = 8.0;
  ObsNoiseSpec obs = ObsNoiseSpec::isotropic(40, 0.01);
  std::uint64_t truth_stride = 1;

  void validate() const;
};

struct TruthState {
  double t = 0.0;
  Vector x;
};

struct ObservationRecord {
  std::uint64_t step_index = 0;
  Vector delta_y;
};

/// Deterministic Lorenz 96 spin-up from forcing * 1 plus a seeded 0.01 perturbation
/// (component 1 shifted by 0.01, all components jittered by 0.01 * N(0,1)),
/// integrated with RK4 at dt = 1e-3.
TruthState spinup_init(std::size_t n, double forcing, double spinup_time, std::uint64_t seed);

/// Euler-Maruyama step of dX = f(X) dt + sqrt(2) dW.
TruthState step_truth(const TruthState& state, double dt, const DriftModel& model,
                      RandomEngine& rng);
/// Same step with a caller-supplied standard normal draw.
TruthState step_truth(const TruthState& state, double dt, const DriftModel& model,
                      const VecRef& noise);

/// dY = X dt + sqrt(epsilon dt) Omega^{-1/2} eta.
ObservationRecord observe_increment(const TruthState& state, double dt, const ObsNoiseSpec& obs,
                                    RandomEngine& rng, std::uint64_t step_index = 0);
ObservationRecord observe_increment(const TruthState& state, double dt, const ObsNoiseSpec& obs,
                                    const VecRef& noise, std::uint64_t step_index = 0);

// ---------------------------------------------------------------------------
// Binary stream format (little-endian):
//   magic[4] ("ENKB" observations, "ENKT" trajectories), version u32, n u32,
//   dt f64, steps u64, epsilon f64, then steps records of n f64.
// For trajectories dt is the spacing between records and steps the record count.

inline constexpr char kObsMagic[4] = {'E', 'N', 'K', 'B'};
inline constexpr char kTrajMagic[4] = {'E', 'N', 'K', 'T'};
inline constexpr std::uint32_t kStreamVersion = 1;

struct StreamHeader {
  char magic[4] = {'E', 'N', 'K', 'B'};
  std::uint32_t version = kStreamVersion;
  std::uint32_t n = 0;
  double dt = 0.0;
  std::uint64_t steps = 0;
  double epsilon = 0.0;

  bool is_observation() const;
  bool is_trajectory() const;
};

class StreamWriter {
 public:
  StreamWriter(const std::filesystem::path& path, StreamHeader header);
  void write(const VecRef& record);
  /// Rewrites the header with the number of records written and flushes.
  void close();
  ~StreamWriter();

  StreamWriter(const StreamWriter&) = delete;
  StreamWriter& operator=(const StreamWriter&) = delete;

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  StreamHeader header_;
  std::uint64_t written_ = 0;
  bool closed_ = false;
};

class StreamReader {
 public:
  explicit StreamReader(const std::filesystem::path& path);
  const StreamHeader& header() const { return header_; }
  /// Reads the next record; false at end of stream.
  bool next(Vector& record);
  std::uint64_t position() const { return pos_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  StreamHeader header_;
  std::uint64_t pos_ = 0;
};

struct SimulationOutput {
  std::filesystem::path observations;
  std::filesystem::path truth;
  std::uint64_t cap_exceedances = 0;  // recorded states with ||x||_inf > 40
};

/// Spin-up, then steps of (observe, advance). Writes the observation stream and the
/// truth trajectory (every truth_stride steps, including step 0 and, when aligned, the
/// final state).
SimulationOutput simulate(const SimConfig& config, const DriftModel& model,
                          const std::filesystem::path& obs_path,
                          const std::filesystem::path& truth_path);

/// Throws BlowUpError if any entry is not finite.
void check_finite(const VecRef& x, std::uint64_t step, const char* what);

}  // namespace enkbf
