#include <algorithm>

#include "enkbf/filter.hpp"

namespace enkbf::reference {

Matrix filter_step(const Matrix& x, const VecRef& delta_y, const FilterConfig& cfg,
                   const DriftModel& model) {
  const Eigen::Index n = x.rows();
  if (static_cast<std::size_t>(n) != cfg.n() || delta_y.size() != n) {
    throw std::invalid_argument("reference filter step: dimension mismatch");
  }
  const double dt = cfg.dt();
  const double eps = cfg.epsilon();

  const auto stats = ensemble_stats(x);
  const CovMatrix pl = schur_localize(stats.cov, cfg.phi());
  const double p_max = stats.cov.diagonal().maxCoeff();
  const double floor = cfg.diag_floor() < 0.0 ? 1e-12 * std::max(1.0, p_max) : cfg.diag_floor();
  const CovMatrix pd = diag_inverse(stats.cov, floor);
  const Matrix gain = pl * cfg.obs().omega.asDiagonal();

  if (cfg.stiffness_guard()) {
    const double rate = std::max(one_norm(gain) / eps, 1.0 / min_diag(stats.cov));
    if (dt * rate > 0.5) throw StiffnessError(dt, rate);
  }

  Matrix out(x.rows(), x.cols());
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const Vector xk = x.col(k);
    Vector next = xk + dt * model(xk);
    if (cfg.inflation_on()) next += dt * pd * (xk - stats.mean);
    next -= (dt / (2.0 * eps)) * gain * (xk + stats.mean);
    next += (1.0 / eps) * gain * delta_y;
    out.col(k) = next;
  }
  return out;
}

}  // namespace enkbf::reference
