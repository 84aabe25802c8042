#include "enkbf/filter.hpp"

#include <algorithm>
#include <cmath>

namespace enkbf {

FilterStepError::FilterStepError(std::uint64_t step, const std::string& what)
    : std::runtime_error("filter step " + std::to_string(step) + ": " + what), step_(step) {}

FilterConfig::FilterConfig(LocalizationMatrix phi, ObsNoiseSpec obs, double dt, bool inflation_on,
                           double diag_floor, bool stiffness_guard)
    : phi_(std::move(phi)),
      obs_(std::move(obs)),
      dt_(dt),
      inflation_on_(inflation_on),
      diag_floor_(diag_floor),
      stiffness_guard_(stiffness_guard) {
  if (!(dt_ > 0.0)) throw std::invalid_argument("filter config: dt must be > 0");
  obs_.validate();
  if (obs_.n() != phi_.n()) throw std::invalid_argument("filter config: Omega and phi dimensions differ");
  pattern_ = std::make_shared<const TaperPattern>(TaperPattern::from(phi_));
}

Ensemble filter_step(const Ensemble& ens, const ObservationRecord& obs, const FilterConfig& cfg,
                     const DriftModel& model, StepStats* stats) {
  Matrix x = ens.particles();
  kernels::Workspace ws;
  const StepStats st = kernels::filter_step_inplace(x, obs.delta_y, cfg, model, ws);
  if (stats) *stats = st;
  return Ensemble(std::move(x));
}

namespace {

Vector mean_drift(const Ensemble& ens, const DriftModel& model, Matrix* per_particle = nullptr) {
  const Matrix& x = ens.particles();
  Matrix f(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    auto fk = f.col(k);
    model.eval(x.col(k), fk);
  }
  Vector fbar;
  kernels::ensemble_mean(f, fbar);
  if (per_particle) *per_particle = std::move(f);
  return fbar;
}

double resolve_floor(const FilterConfig& cfg, const CovMatrix& p) {
  return cfg.diag_floor() < 0.0 ? 1e-12 * std::max(1.0, p.diagonal().maxCoeff()) : cfg.diag_floor();
}

}  // namespace

Vector mean_increment(const Ensemble& ens, const ObservationRecord& obs, const FilterConfig& cfg,
                      const DriftModel& model) {
  const CovMatrix& p = ens.cov();
  diag_inverse(p, resolve_floor(cfg, p));  // same failure mode as filter_step
  const CovMatrix pl = schur_localize(p, cfg.phi());
  const double dt = cfg.dt();
  const Vector fbar = mean_drift(ens, model);
  const Vector innovation = ens.mean() * dt - obs.delta_y;
  return fbar * dt - (1.0 / cfg.epsilon()) * (pl * cfg.obs().omega.asDiagonal() * innovation);
}

CovMatrix cov_ode_rhs(const Ensemble& ens, const FilterConfig& cfg, const DriftModel& model) {
  const CovMatrix& p = ens.cov();
  const CovMatrix pd = diag_inverse(p, resolve_floor(cfg, p));
  const CovMatrix pl = schur_localize(p, cfg.phi());
  const auto omega = cfg.obs().omega.asDiagonal();

  Matrix f;
  const Vector fbar = mean_drift(ens, model, &f);
  const Matrix dx = ens.particles().colwise() - ens.mean();
  const Matrix df = f.colwise() - fbar;
  const Matrix ft = dx * df.transpose() / static_cast<double>(ens.m() - 1);

  CovMatrix rhs = (ft + ft.transpose()) + (pd * p + p * pd) -
                  (1.0 / (2.0 * cfg.epsilon())) * (pl * omega * p + p * omega * pl);
  symmetrize(rhs);
  return rhs;
}

StreamObservationSource::StreamObservationSource(const std::filesystem::path& path)
    : reader_(path) {
  if (!reader_.header().is_observation()) {
    throw std::runtime_error(path.string() + " is not an observation stream");
  }
}

bool StreamObservationSource::next(ObservationRecord& rec) {
  rec.step_index = reader_.position();
  return reader_.next(rec.delta_y);
}

FilterRun run_filter(ObservationSource& source, const FilterConfig& cfg, const DriftModel& model,
                     Ensemble init, const RunOptions& options) {
  const std::size_t n = cfg.n();
  if (source.n() != n || model.n() != n || init.n() != n) {
    throw std::invalid_argument("run_filter: dimension mismatch between stream, config, model and ensemble");
  }
  if (source.dt() != cfg.dt()) throw std::invalid_argument("run_filter: stream dt does not match config");
  if (source.epsilon() != cfg.epsilon()) {
    throw std::invalid_argument("run_filter: stream epsilon does not match config");
  }
  if (options.stride < 1) throw std::invalid_argument("run_filter: stride must be >= 1");

  const auto loc = localization_stats(cfg.phi());
  const double rho = taper_rho(cfg.phi());
  const auto& obs = cfg.obs();
  const auto bounds =
      stability_bounds(model.c_f(), obs.omega_min(), obs.omega_max(), loc.c_phi, obs.epsilon);

  Matrix x = init.particles();
  double p0_max = 0.0;
  {
    const Matrix a = x.colwise() - init.mean();
    p0_max = (a.rowwise().squaredNorm() / static_cast<double>(init.m() - 1)).maxCoeff();
  }
  const double upper = std::max(p0_max, bounds.lambda_max);

  FilterRun run{{}, {}, {}, {}, bounds, p0_max, rho, 0.0, 0, std::move(init)};
  const double dt = cfg.dt();

  auto record = [&](std::uint64_t step, const Vector& mean) {
    if (step % options.stride != 0) return;
    if (options.keep_means) {
      run.mean_steps.push_back(step);
      run.means.push_back(mean);
    }
    if (options.on_record) options.on_record(step, static_cast<double>(step) * dt, mean);
  };

  kernels::Workspace ws;
  Vector mean;
  kernels::ensemble_mean(x, mean);
  record(0, mean);

  std::uint64_t k = 0;
  ObservationRecord rec;
  while (source.next(rec)) {
    if (static_cast<std::size_t>(rec.delta_y.size()) != n) {
      throw FilterStepError(k, "observation record has wrong length");
    }
    StepStats st;
    try {
      st = kernels::filter_step_inplace(x, rec.delta_y, cfg, model, ws);
      check_finite(Eigen::Map<const Vector>(x.data(), x.size()), k, "ensemble state");
    } catch (const std::exception& e) {
      throw FilterStepError(k, e.what());
    }

    const double t = static_cast<double>(k) * dt;
    if (st.p_max > upper) ++run.violations.upper;
    if (t > bounds.t_star_lower && st.p_min < bounds.lambda_min) ++run.violations.lower;
    if (st.di_residual > 1e-10) ++run.violations.inverse;
    run.max_di_residual = std::max(run.max_di_residual, st.di_residual);

    if (k % options.stride == 0) {
      const auto rates = alpha_beta(st.p_min, st.p_max, rho, model.c_f(), loc.c_phi,
                                    obs.omega_max(), obs.epsilon);
      run.diagnostics.push_back(
          DiagnosticsRow{k, t, st.p_max, st.p_min, rates.alpha, rates.beta, st.di_residual});
    }

    ++k;
    if (k % options.stride == 0) {
      kernels::ensemble_mean(x, mean);
      record(k, mean);
    }
  }
  run.steps = k;
  run.final_ensemble = Ensemble(std::move(x));
  return run;
}

}  // namespace enkbf
