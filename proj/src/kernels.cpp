#include <algorithm>
#include <cmath>
#include <sstream>

#include "enkbf/filter.hpp"

namespace enkbf {

StiffnessError::StiffnessError(double dt, double rate)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "step size too coarse: dt * rate = " << dt * rate << " > 0.5 (rate " << rate
           << "); use dt <= " << 0.5 / rate << " or disable the stiffness guard";
        return os.str();
      }()),
      rate_(rate) {}

TaperPattern TaperPattern::from(const LocalizationMatrix& phi) {
  const std::size_t n = phi.n();
  TaperPattern p;
  p.row_begin.reserve(n + 1);
  p.diag_slot.resize(n);
  p.row_begin.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = phi(i, j);
      if (w == 0.0) continue;
      if (i == j) p.diag_slot[i] = p.col.size();
      p.col.push_back(j);
      p.weight.push_back(w);
    }
    p.row_begin.push_back(p.col.size());
  }
  return p;
}

namespace kernels {

void ensemble_mean(const Matrix& x, Vector& mean) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  mean.resize(n);
  const double inv_m = 1.0 / static_cast<double>(m);
#pragma omp parallel for schedule(static) if (n >= 256)
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) acc += x(i, k);
    mean(i) = acc * inv_m;
  }
}

StepStats filter_step_inplace(Matrix& x, const VecRef& delta_y, const FilterConfig& cfg,
                              const DriftModel& model, Workspace& ws) {
  const Eigen::Index n = x.rows();
  const Eigen::Index m = x.cols();
  const TaperPattern& pat = cfg.pattern();
  if (static_cast<std::size_t>(n) != pat.n() || delta_y.size() != n ||
      static_cast<std::size_t>(n) != model.n()) {
    throw std::invalid_argument("filter step: dimension mismatch");
  }
  if (m < 2) throw std::invalid_argument("filter step: need M >= 2 particles");

  const double dt = cfg.dt();
  const double eps = cfg.epsilon();
  const Vector& omega = cfg.obs().omega;

  ensemble_mean(x, ws.mean);

  // Anomalies stored transposed (M x n) so each state index is contiguous over particles.
  ws.anomalies.resize(m, n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < m; ++k) ws.anomalies(k, i) = x(i, k) - ws.mean(i);
  }

  ws.localized.resize(pat.col.size());
  ws.p_diag.resize(n);
  const double norm = 1.0 / static_cast<double>(m - 1);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ai = ws.anomalies.col(i);
    for (std::size_t s = pat.row_begin[i]; s < pat.row_begin[i + 1]; ++s) {
      const auto aj = ws.anomalies.col(static_cast<Eigen::Index>(pat.col[s]));
      double acc = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) acc += ai(k) * aj(k);
      const double pij = acc * norm;
      ws.localized[s] = pij * pat.weight[s];
      if (pat.col[s] == static_cast<std::size_t>(i)) ws.p_diag(i) = pij;
    }
  }

  StepStats st;
  st.p_max = ws.p_diag.maxCoeff();
  st.p_min = ws.p_diag.minCoeff();
  const double floor = cfg.diag_floor() < 0.0 ? 1e-12 * std::max(1.0, st.p_max) : cfg.diag_floor();
  ws.di.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = ws.p_diag(i);
    if (!(p > floor)) throw SingularCovarianceError(static_cast<std::size_t>(i), p, floor);
    ws.di(i) = 1.0 / p;
    st.di_residual = std::max(st.di_residual, std::abs(ws.di(i) * p - 1.0));
  }

  double gain_norm = 0.0;  // ||P^L Omega||_1; P^L symmetric so column sums are row sums
  for (Eigen::Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t s = pat.row_begin[j]; s < pat.row_begin[j + 1]; ++s) {
      acc += std::abs(ws.localized[s]);
    }
    gain_norm = std::max(gain_norm, acc * omega(j));
  }
  st.stiffness_rate = std::max(gain_norm / eps, 1.0 / st.p_min);
  if (cfg.stiffness_guard() && dt * st.stiffness_rate > 0.5) throw StiffnessError(dt, st.stiffness_rate);

  // (1/eps) P^L Omega (dY - dt/2 Xbar), shared by all particles.
  ws.common.resize(n);
  {
    Vector w(n);
    for (Eigen::Index j = 0; j < n; ++j) w(j) = omega(j) * (delta_y(j) - 0.5 * dt * ws.mean(j));
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t s = pat.row_begin[i]; s < pat.row_begin[i + 1]; ++s) {
        acc += ws.localized[s] * w(static_cast<Eigen::Index>(pat.col[s]));
      }
      ws.common(i) = acc / eps;
    }
  }

  const double infl = cfg.inflation_on() ? dt : 0.0;
  const double half_gain = dt / (2.0 * eps);
  ws.drift.resize(n, m);
#pragma omp parallel
  {
    Vector weighted(n);
#pragma omp for schedule(static)
    for (Eigen::Index k = 0; k < m; ++k) {
      auto xk = x.col(k);
      auto fk = ws.drift.col(k);
      model.eval(xk, fk);
      for (Eigen::Index j = 0; j < n; ++j) weighted(j) = omega(j) * xk(j);
      // fk becomes the full increment; xk is only read until the final update below.
      for (Eigen::Index i = 0; i < n; ++i) {
        double pl = 0.0;
        for (std::size_t s = pat.row_begin[i]; s < pat.row_begin[i + 1]; ++s) {
          pl += ws.localized[s] * weighted(static_cast<Eigen::Index>(pat.col[s]));
        }
        fk(i) = dt * fk(i) + infl * ws.di(i) * ws.anomalies(k, i) - half_gain * pl + ws.common(i);
      }
      xk += fk;
    }
  }
  return st;
}

}  // namespace kernels
}  // namespace enkbf
