#include "enkbf/dynamics.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

namespace enkbf {

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

template <typename T>
void put(std::ostream& os, T v) {
  const T le = to_little(v);
  os.write(reinterpret_cast<const char*>(&le), sizeof(T));
}

template <typename T>
bool get(std::istream& is, T& v) {
  T raw;
  if (!is.read(reinterpret_cast<char*>(&raw), sizeof(T))) return false;
  v = to_little(raw);
  return true;
}

void write_header(std::ostream& os, const StreamHeader& h) {
  os.write(h.magic, 4);
  put(os, h.version);
  put(os, h.n);
  put(os, h.dt);
  put(os, h.steps);
  put(os, h.epsilon);
}

constexpr double kSpinupDt = 1e-3;

Vector rk4_step(const DriftModel& model, const Vector& x, double h) {
  const Vector k1 = model(x);
  const Vector k2 = model(x + 0.5 * h * k1);
  const Vector k3 = model(x + 0.5 * h * k2);
  const Vector k4 = model(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

BlowUpError::BlowUpError(const std::string& what, std::uint64_t step)
    : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

void check_finite(const VecRef& x, std::uint64_t step, const char* what) {
  if (!x.allFinite()) throw BlowUpError(std::string("non-finite ") + what, step);
}

void SimConfig::validate() const {
  if (n < 4) throw std::invalid_argument("simulation: n must be >= 4");
  if (!(dt > 0.0)) throw std::invalid_argument("simulation: dt must be > 0");
  if (steps < 1) throw std::invalid_argument("simulation: steps must be >= 1");
  if (!(spinup_time >= 0.0)) throw std::invalid_argument("simulation: spinup_time must be >= 0");
  if (truth_stride < 1) throw std::invalid_argument("simulation: truth_stride must be >= 1");
  if (obs.n() != n) throw std::invalid_argument("simulation: Omega dimension mismatch");
  obs.validate();
}

TruthState spinup_init(std::size_t n, double forcing, double spinup_time, std::uint64_t seed) {
  if (n < 4) throw std::invalid_argument("spinup_init: n must be >= 4");
  if (!(spinup_time >= 0.0)) throw std::invalid_argument("spinup_init: spinup_time must be >= 0");
  auto rng = make_engine(seed, Stream::spinup);
  Vector jitter(static_cast<Eigen::Index>(n));
  fill_normal(rng, jitter);
  Vector x = Vector::Constant(static_cast<Eigen::Index>(n), forcing) + 0.01 * jitter;
  x(0) += 0.01;

  const auto model = DriftModel::lorenz96(n, forcing);
  const auto steps = static_cast<std::uint64_t>(std::llround(spinup_time / kSpinupDt));
  for (std::uint64_t k = 0; k < steps; ++k) {
    x = rk4_step(model, x, kSpinupDt);
    check_finite(x, k, "state during spin-up");
  }
  return TruthState{0.0, std::move(x)};
}

TruthState step_truth(const TruthState& state, double dt, const DriftModel& model,
                      const VecRef& noise) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_truth: dt must be > 0");
  Vector f(state.x.size());
  model.eval(state.x, f);
  TruthState next{state.t + dt, state.x + dt * f + std::sqrt(2.0 * dt) * noise};
  check_finite(next.x, 0, "truth state");
  return next;
}

TruthState step_truth(const TruthState& state, double dt, const DriftModel& model,
                      RandomEngine& rng) {
  Vector xi(state.x.size());
  fill_normal(rng, xi);
  return step_truth(state, dt, model, xi);
}

ObservationRecord observe_increment(const TruthState& state, double dt, const ObsNoiseSpec& obs,
                                    const VecRef& noise, std::uint64_t step_index) {
  if (!(dt > 0.0)) throw std::invalid_argument("observe_increment: dt must be > 0");
  ObservationRecord rec;
  rec.step_index = step_index;
  rec.delta_y = state.x * dt +
                std::sqrt(obs.epsilon * dt) * obs.omega.cwiseSqrt().cwiseInverse().cwiseProduct(noise);
  check_finite(rec.delta_y, step_index, "observation increment");
  return rec;
}

ObservationRecord observe_increment(const TruthState& state, double dt, const ObsNoiseSpec& obs,
                                    RandomEngine& rng, std::uint64_t step_index) {
  Vector eta(state.x.size());
  fill_normal(rng, eta);
  return observe_increment(state, dt, obs, eta, step_index);
}

bool StreamHeader::is_observation() const { return std::memcmp(magic, kObsMagic, 4) == 0; }
bool StreamHeader::is_trajectory() const { return std::memcmp(magic, kTrajMagic, 4) == 0; }

StreamWriter::StreamWriter(const std::filesystem::path& path, StreamHeader header)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), header_(header) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_header(out_, header_);
}

void StreamWriter::write(const VecRef& record) {
  if (closed_) throw std::logic_error("write on closed stream " + path_.string());
  if (static_cast<std::uint32_t>(record.size()) != header_.n) {
    throw std::invalid_argument("stream record length mismatch for " + path_.string());
  }
  for (Eigen::Index i = 0; i < record.size(); ++i) put(out_, record(i));
  ++written_;
}

void StreamWriter::close() {
  if (closed_) return;
  header_.steps = written_;
  out_.seekp(0);
  write_header(out_, header_);
  out_.flush();
  if (!out_) throw std::runtime_error("write failure on " + path_.string());
  out_.close();
  closed_ = true;
}

StreamWriter::~StreamWriter() {
  try {
    close();
  } catch (...) {
  }
}

StreamReader::StreamReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw std::runtime_error("cannot open " + path.string());
  in_.read(header_.magic, 4);
  const bool ok = in_ && get(in_, header_.version) && get(in_, header_.n) &&
                  get(in_, header_.dt) && get(in_, header_.steps) && get(in_, header_.epsilon);
  if (!ok) throw std::runtime_error("truncated stream header in " + path.string());
  if (!header_.is_observation() && !header_.is_trajectory()) {
    throw std::runtime_error("bad magic in " + path.string());
  }
  if (header_.version != kStreamVersion) {
    throw std::runtime_error("unsupported stream version " + std::to_string(header_.version) +
                             " in " + path.string());
  }
}

bool StreamReader::next(Vector& record) {
  if (pos_ >= header_.steps) return false;
  record.resize(header_.n);
  for (std::uint32_t i = 0; i < header_.n; ++i) {
    double v;
    if (!get(in_, v)) {
      throw std::runtime_error("truncated record " + std::to_string(pos_) + " in " +
                               path_.string());
    }
    record(i) = v;
  }
  ++pos_;
  return true;
}

SimulationOutput simulate(const SimConfig& config, const DriftModel& model,
                          const std::filesystem::path& obs_path,
                          const std::filesystem::path& truth_path) {
  config.validate();
  if (model.n() != config.n) throw std::invalid_argument("simulate: model dimension mismatch");

  TruthState state = spinup_init(config.n, config.forcing, config.spinup_time, config.seed);
  auto truth_rng = make_engine(config.seed, Stream::truth);
  auto obs_rng = make_engine(config.seed, Stream::observation);

  StreamHeader oh;
  std::memcpy(oh.magic, kObsMagic, 4);
  oh.n = static_cast<std::uint32_t>(config.n);
  oh.dt = config.dt;
  oh.steps = config.steps;
  oh.epsilon = config.obs.epsilon;
  StreamHeader th = oh;
  std::memcpy(th.magic, kTrajMagic, 4);
  th.dt = config.dt * static_cast<double>(config.truth_stride);

  StreamWriter obs_out(obs_path, oh);
  StreamWriter truth_out(truth_path, th);

  SimulationOutput result{obs_path, truth_path, 0};
  auto record_truth = [&](std::uint64_t k) {
    if (k % config.truth_stride != 0) return;
    truth_out.write(state.x);
    if (state.x.cwiseAbs().maxCoeff() > 40.0) ++result.cap_exceedances;
  };

  for (std::uint64_t k = 0; k < config.steps; ++k) {
    record_truth(k);
    const auto rec = observe_increment(state, config.dt, config.obs, obs_rng, k);
    obs_out.write(rec.delta_y);
    try {
      state = step_truth(state, config.dt, model, truth_rng);
    } catch (const BlowUpError&) {
      throw BlowUpError("truth blow-up", k);
    }
  }
  record_truth(config.steps);
  obs_out.close();
  truth_out.close();
  return result;
}

}  // namespace enkbf
