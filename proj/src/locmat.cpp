#include "enkbf/locmat.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace enkbf {

SingularCovarianceError::SingularCovarianceError(std::size_t index, double value, double floor)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "singular covariance: diagonal entry " << index << " = " << value
           << " <= floor " << floor << " (ensemble collapse)";
        return os.str();
      }()),
      index_(index),
      value_(value) {}

double gaspari_cohn(double x) {
  if (!(x >= 0.0)) throw std::domain_error("gaspari_cohn: argument must be >= 0");
  if (x >= 2.0) return 0.0;
  const double x2 = x * x;
  const double x3 = x2 * x;
  const double x4 = x3 * x;
  const double x5 = x4 * x;
  if (x <= 1.0) {
    return -0.25 * x5 + 0.5 * x4 + 0.625 * x3 - (5.0 / 3.0) * x2 + 1.0;
  }
  return x5 / 12.0 - 0.5 * x4 + 0.625 * x3 + (5.0 / 3.0) * x2 - 5.0 * x + 4.0 -
         2.0 / (3.0 * x);
}

std::size_t circ_distance(std::size_t i, std::size_t j, std::size_t n) {
  if (i < 1 || j < 1 || i > n || j > n) {
    std::ostringstream os;
    os << "circ_distance: indices (" << i << ", " << j << ") out of range [1, " << n << "]";
    throw std::out_of_range(os.str());
  }
  const std::size_t direct = i > j ? i - j : j - i;
  return std::min(direct, n - direct);
}

LocalizationMatrix LocalizationMatrix::from_entries(Matrix entries) {
  if (entries.rows() != entries.cols()) {
    throw std::invalid_argument("localization matrix must be square");
  }
  const Eigen::Index n = entries.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (entries(i, i) != 1.0) throw std::invalid_argument("localization matrix needs unit diagonal");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (entries(i, j) != entries(j, i)) {
        throw std::invalid_argument("localization matrix must be symmetric");
      }
      if (!(entries(i, j) >= 0.0)) {
        throw std::invalid_argument("localization matrix entries must be nonnegative");
      }
    }
  }
  return LocalizationMatrix(std::move(entries), std::numeric_limits<double>::infinity());
}

LocalizationMatrix LocalizationMatrix::identity(std::size_t n) {
  return from_entries(Matrix::Identity(n, n));
}

LocalizationMatrix LocalizationMatrix::all_ones(std::size_t n) {
  return from_entries(Matrix::Ones(n, n));
}

LocalizationMatrix build_localization(std::size_t n, double radius, const DistanceFn& dist,
                                      const TaperFn& taper) {
  if (n < 1) throw std::invalid_argument("build_localization: n must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("build_localization: radius must be > 0");
  Matrix phi(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    phi(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = static_cast<double>(dist(i + 1, j + 1, n));
      const double v = taper(d / radius);
      phi(i, j) = v;
      phi(j, i) = v;
    }
  }
  return LocalizationMatrix(std::move(phi), radius);
}

LocalizationStats localization_stats(const LocalizationMatrix& phi) {
  LocalizationStats s;
  const Matrix& a = phi.entries();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (j != i) off += a(i, j);
    }
    s.q = std::max(s.q, off);
    s.c_phi = std::max(s.c_phi, off + a(i, i));
  }
  s.diag_dominant = s.q < 1.0;
  return s;
}

CovMatrix schur_localize(const CovMatrix& p, const LocalizationMatrix& phi) {
  if (p.rows() != p.cols() || static_cast<std::size_t>(p.rows()) != phi.n()) {
    throw std::invalid_argument("schur_localize: dimension mismatch");
  }
  return p.cwiseProduct(phi.entries());
}

double default_diag_floor(const CovMatrix& p) {
  return 1e-12 * std::max(1.0, max_abs_norm(p));
}

CovMatrix diag_inverse(const CovMatrix& p, double floor) {
  if (p.rows() != p.cols()) throw std::invalid_argument("diag_inverse: matrix must be square");
  if (floor < 0.0) floor = default_diag_floor(p);
  const Eigen::Index n = p.rows();
  CovMatrix out = CovMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = p(i, i);
    if (!(v > floor)) throw SingularCovarianceError(static_cast<std::size_t>(i), v, floor);
    out(i, i) = 1.0 / v;
  }
  return out;
}

double max_abs_norm(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

double one_norm(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().colwise().sum().maxCoeff();
}

double min_diag(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.diagonal().minCoeff();
}

double op_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const Matrix ata = a.transpose() * a;
  if (ata.rows() <= 64) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(ata, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  // Power iteration on A^T A.
  Vector v(ata.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = 1.0 + 1.0 / static_cast<double>(i + 1);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Vector w = ata * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / norm;
    if (std::abs(next - lambda) <= 1e-10 * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(0.0, lambda));
}

NormBundle norms(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("norms: matrix must be square");
  return NormBundle{max_abs_norm(a), one_norm(a), min_diag(a), op_norm(a)};
}

void symmetrize(Matrix& a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double m = 0.5 * (a(i, j) + a(j, i));
      a(i, j) = m;
      a(j, i) = m;
    }
  }
}

double min_eigenvalue(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace enkbf
