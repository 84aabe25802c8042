#include "enkbf/filter.hpp"

namespace enkbf {

Ensemble::Ensemble(Matrix particles) : particles_(std::move(particles)) {
  if (particles_.cols() < 2) throw std::invalid_argument("ensemble needs at least 2 particles");
  if (particles_.rows() < 1) throw std::invalid_argument("ensemble particles must be non-empty");
  kernels::ensemble_mean(particles_, mean_);
}

const CovMatrix& Ensemble::cov() const {
  if (!cov_) cov_ = ensemble_stats(particles_).cov;
  return *cov_;
}

EnsembleStats ensemble_stats(const Matrix& particles) {
  const Eigen::Index n = particles.rows();
  const Eigen::Index m = particles.cols();
  if (m < 2) throw std::invalid_argument("ensemble_stats: need M >= 2 particles");
  EnsembleStats s;
  kernels::ensemble_mean(particles, s.mean);
  const Matrix anomalies = particles.colwise() - s.mean;
  const double norm = 1.0 / static_cast<double>(m - 1);
  s.cov.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) acc += anomalies(i, k) * anomalies(j, k);
      s.cov(i, j) = acc * norm;
      s.cov(j, i) = s.cov(i, j);
    }
  }
  symmetrize(s.cov);
  return s;
}

Ensemble init_ensemble(const Vector& center, std::size_t m, RandomEngine& rng) {
  if (m < 2) throw std::invalid_argument("init_ensemble: need M >= 2");
  Matrix x(center.size(), static_cast<Eigen::Index>(m));
  Vector draw(center.size());
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    fill_normal(rng, draw);
    x.col(k) = center + draw;
  }
  return Ensemble(std::move(x));
}

}  // namespace enkbf
