#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "enkbf/dynamics.hpp"
#include "enkbf/locmat.hpp"
#include "enkbf/model.hpp"
#include "enkbf/theory.hpp"

namespace enkbf {

/// Step size too coarse for the gain / inflation rates of the current ensemble.
class StiffnessError : public std::runtime_error {
 public:
  StiffnessError(double dt, double rate);
  double rate() const { return rate_; }

 private:
  double rate_;
};

/// Raised by run_filter; wraps the failing step's error with its index.
class FilterStepError : public std::runtime_error {
 public:
  FilterStepError(std::uint64_t step, const std::string& what);
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

/// Nonzero pattern of a taper in compressed-row form. Row i lists every column j with
/// phi(i, j) != 0 in ascending order together with the taper weight.
struct TaperPattern {
  std::vector<std::size_t> row_begin;  // size n + 1
  std::vector<std::size_t> col;
  std::vector<double> weight;
  std::vector<std::size_t> diag_slot;  // position of (i, i) in col

  static TaperPattern from(const LocalizationMatrix& phi);
  std::size_t n() const { return row_begin.empty() ? 0 : row_begin.size() - 1; }
};

class FilterConfig {
 public:
  FilterConfig(LocalizationMatrix phi, ObsNoiseSpec obs, double dt, bool inflation_on = true,
               double diag_floor = -1.0, bool stiffness_guard = true);

  const LocalizationMatrix& phi() const { return phi_; }
  const TaperPattern& pattern() const { return *pattern_; }
  const ObsNoiseSpec& obs() const { return obs_; }
  double dt() const { return dt_; }
  double epsilon() const { return obs_.epsilon; }
  bool inflation_on() const { return inflation_on_; }
  /// Negative selects the relative default 1e-12 * max(1, ||P||_max).
  double diag_floor() const { return diag_floor_; }
  bool stiffness_guard() const { return stiffness_guard_; }
  std::size_t n() const { return phi_.n(); }

 private:
  LocalizationMatrix phi_;
  std::shared_ptr<const TaperPattern> pattern_;
  ObsNoiseSpec obs_;
  double dt_;
  bool inflation_on_;
  double diag_floor_;
  bool stiffness_guard_;
};

/// M particles stored as the columns of an n x M matrix, with the sample mean kept
/// current and the full sample covariance computed on first request.
class Ensemble {
 public:
  explicit Ensemble(Matrix particles);

  std::size_t m() const { return static_cast<std::size_t>(particles_.cols()); }
  std::size_t n() const { return static_cast<std::size_t>(particles_.rows()); }
  const Matrix& particles() const { return particles_; }
  const Vector& mean() const { return mean_; }
  const CovMatrix& cov() const;

 private:
  Matrix particles_;
  Vector mean_;
  mutable std::optional<CovMatrix> cov_;
};

struct EnsembleStats {
  Vector mean;
  CovMatrix cov;
};

/// Sample mean and unbiased (M - 1) covariance, summed over particles in index order.
EnsembleStats ensemble_stats(const Matrix& particles);

/// Initial ensemble: center + N(0, I) draws per particle.
Ensemble init_ensemble(const Vector& center, std::size_t m, RandomEngine& rng);

/// Per-step summary of the pre-step statistics.
struct StepStats {
  double p_max = 0.0;
  double p_min = 0.0;
  double di_residual = 0.0;  // max_i |[P^dagger P]_{ii} - 1|
  double stiffness_rate = 0.0;
};

/// One explicit Euler step of the localized ensemble Kalman-Bucy flow:
///
///   X^i += dt f(X^i) + [inflation] dt P^dagger (X^i - Xbar)
///          - (dt / 2 eps) P^L Omega (X^i + Xbar) + (1 / eps) P^L Omega dY
///
/// with P, Xbar frozen at the step start. Uses the band-sparse parallel kernel.
Ensemble filter_step(const Ensemble& ens, const ObservationRecord& obs, const FilterConfig& cfg,
                     const DriftModel& model, StepStats* stats = nullptr);

/// Mean increment predicted by the mean equation, f_bar dt - (1/eps) P^L Omega (Xbar dt - dY).
Vector mean_increment(const Ensemble& ens, const ObservationRecord& obs, const FilterConfig& cfg,
                      const DriftModel& model);

/// Right-hand side of the covariance evolution:
/// (F + F^T) + (P^dagger P + P P^dagger) - (1 / 2 eps)(P^L Omega P + P Omega P^L).
CovMatrix cov_ode_rhs(const Ensemble& ens, const FilterConfig& cfg, const DriftModel& model);

namespace kernels {

/// Scratch buffers reused across steps.
struct Workspace {
  Vector mean;
  Matrix anomalies;
  Vector p_diag;
  std::vector<double> localized;  // P^L values on the taper pattern
  Vector di;                      // diagonal of P^dagger
  Vector common;
  Matrix drift;
};

void ensemble_mean(const Matrix& x, Vector& mean);

/// Band-sparse step, in place. Parallel over rows and particles; every reduction is
/// summed in a fixed order so the result does not depend on the thread count.
StepStats filter_step_inplace(Matrix& x, const VecRef& delta_y, const FilterConfig& cfg,
                              const DriftModel& model, Workspace& ws);

}  // namespace kernels

namespace reference {

/// Dense serial step written directly from the update formula (full P, P^L, P^dagger).
Matrix filter_step(const Matrix& x, const VecRef& delta_y, const FilterConfig& cfg,
                   const DriftModel& model);

}  // namespace reference

/// Source of observation increments for run_filter.
class ObservationSource {
 public:
  virtual ~ObservationSource() = default;
  virtual std::size_t n() const = 0;
  virtual double dt() const = 0;
  virtual double epsilon() const = 0;
  virtual bool next(ObservationRecord& rec) = 0;
};

class StreamObservationSource : public ObservationSource {
 public:
  explicit StreamObservationSource(const std::filesystem::path& path);
  std::size_t n() const override { return reader_.header().n; }
  double dt() const override { return reader_.header().dt; }
  double epsilon() const override { return reader_.header().epsilon; }
  bool next(ObservationRecord& rec) override;

 private:
  StreamReader reader_;
};

struct DiagnosticsRow {
  std::uint64_t step = 0;
  double t = 0.0;
  double p_max = 0.0;
  double p_min = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double di_residual = 0.0;
};

struct BoundViolations {
  std::uint64_t upper = 0;   // p_max above max(||P_0||_max, lambda_max)
  std::uint64_t lower = 0;   // p_min below lambda_min after t_star_lower
  std::uint64_t inverse = 0; // |[P^dagger P]_{ii} - 1| > 1e-10
};

struct RunOptions {
  std::uint64_t stride = 10;
  bool keep_means = true;
  /// Called at every recorded step with the current ensemble mean, before the
  /// observation for that step is assimilated.
  std::function<void(std::uint64_t step, double t, const Vector& mean)> on_record;
};

struct FilterRun {
  std::vector<std::uint64_t> mean_steps;
  std::vector<Vector> means;
  std::vector<DiagnosticsRow> diagnostics;
  BoundViolations violations;
  StabilityBounds bounds;
  double p0_max = 0.0;
  double rho = 0.0;
  double max_di_residual = 0.0;
  std::uint64_t steps = 0;
  Ensemble final_ensemble;
};

/// Sequentially assimilates every record of source. Errors from a step are rethrown
/// as FilterStepError carrying the step index.
FilterRun run_filter(ObservationSource& source, const FilterConfig& cfg, const DriftModel& model,
                     Ensemble init, const RunOptions& options = {});

}  // namespace enkbf
