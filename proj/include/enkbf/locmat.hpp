#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace enkbf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Dense symmetric covariance-like matrix (P, P^L, P^dagger).
using CovMatrix = Eigen::MatrixXd;

/// Thrown when a covariance diagonal entry falls to or below the collapse floor.
class SingularCovarianceError : public std::runtime_error {
 public:
  SingularCovarianceError(std::size_t index, double value, double floor);
  std::size_t index() const { return index_; }
  double value() const { return value_; }

 private:
  std::size_t index_;
  double value_;
};

/// Gaspari-Cohn fifth-order piecewise rational taper. Compactly supported on [0, 2).
double gaspari_cohn(double x);

/// Circular index distance on a ring of n sites, 1-based indices.
std::size_t circ_distance(std::size_t i, std::size_t j, std::size_t n);

using DistanceFn = std::function<std::size_t(std::size_t, std::size_t, std::size_t)>;
using TaperFn = std::function<double(double)>;

/// Symmetric, unit-diagonal, nonnegative taper matrix.
///
/// Instances built through build_localization carry the decorrelation radius and
/// satisfy the support condition entries(i,j) == 0 for d(i,j) >= 2 * radius.
/// from_entries() wraps an arbitrary valid taper (radius reported as +inf).
class LocalizationMatrix {
 public:
  static LocalizationMatrix from_entries(Matrix entries);

  std::size_t n() const { return static_cast<std::size_t>(entries_.rows()); }
  const Matrix& entries() const { return entries_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
  double radius() const { return radius_; }

  static LocalizationMatrix identity(std::size_t n);
  static LocalizationMatrix all_ones(std::size_t n);

 private:
  friend LocalizationMatrix build_localization(std::size_t, double, const DistanceFn&,
                                               const TaperFn&);
  LocalizationMatrix(Matrix entries, double radius)
      : entries_(std::move(entries)), radius_(radius) {}

  Matrix entries_;
  double radius_ = std::numeric_limits<double>::infinity();
};

struct LocalizationStats {
  double c_phi = 0.0;  // max row sum
  double q = 0.0;      // max off-diagonal row sum
  bool diag_dominant = false;
};

struct NormBundle {
  double max_abs = 0.0;
  double one_norm = 0.0;
  double min_diag = 0.0;
  double op_norm = 0.0;
};

LocalizationMatrix build_localization(std::size_t n, double radius,
                                      const DistanceFn& dist = circ_distance,
                                      const TaperFn& taper = gaspari_cohn);

LocalizationStats localization_stats(const LocalizationMatrix& phi);

/// Entrywise product P o phi.
CovMatrix schur_localize(const CovMatrix& p, const LocalizationMatrix& phi);

/// Default collapse floor: 1e-12 * max(1, ||P||_max).
double default_diag_floor(const CovMatrix& p);

/// Diagonal matrix of reciprocal diagonal entries. Throws SingularCovarianceError
/// when any diagonal entry is <= floor. A negative floor selects the default.
CovMatrix diag_inverse(const CovMatrix& p, double floor = -1.0);

NormBundle norms(const Matrix& a);

/// l2 operator norm; dense eigensolve for n <= 64, power iteration above.
double op_norm(const Matrix& a);

double max_abs_norm(const Matrix& a);
double one_norm(const Matrix& a);  // max column abs sum
double min_diag(const Matrix& a);

/// In-place (A + A^T) / 2.
void symmetrize(Matrix& a);

double min_eigenvalue(const Matrix& symmetric);

}  // namespace enkbf
