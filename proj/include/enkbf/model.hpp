#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "enkbf/locmat.hpp"

namespace enkbf {

using VecRef = Eigen::Ref<const Vector>;
using VecOut = Eigen::Ref<Vector>;

/// Writes f(x) into out; out has the same length as x.
using DriftFn = std::function<void(const VecRef& x, VecOut out)>;

enum class DistanceKind { circular, none };

/// An immutable drift map with its short-range Lipschitz metadata.
///
/// lipschitz_seq[k] bounds the sensitivity of f_i to x_j at circular distance k.
/// c_f is the largest row sum of those bounds and is recomputed on construction.
class DriftModel {
 public:
  DriftModel(std::size_t n, DriftFn drift, std::vector<double> lipschitz_seq,
             DistanceKind dist = DistanceKind::circular, std::string name = "custom");

  std::size_t n() const { return n_; }
  const std::vector<double>& lipschitz_seq() const { return lipschitz_; }
  double c_f() const { return c_f_; }
  DistanceKind dist() const { return dist_; }
  const std::string& name() const { return name_; }

  void eval(const VecRef& x, VecOut out) const { drift_(x, out); }
  Vector operator()(const VecRef& x) const;

  static DriftModel lorenz96(std::size_t n, double forcing = 8.0);
  /// Soft-truncated Lorenz 96 plus an optional additive forcing (0 reproduces the
  /// printed truncated form).
  static DriftModel lorenz96_truncated(std::size_t n, double cap = 40.0, double forcing = 0.0);
  static DriftModel linear(const Matrix& a);
  static DriftModel zero(std::size_t n);

 private:
  std::size_t n_;
  DriftFn drift_;
  std::vector<double> lipschitz_;
  DistanceKind dist_;
  std::string name_;
  double c_f_ = 0.0;
};

/// Observation-noise parameters in canonical form: R R^T = epsilon * Omega^{-1}.
struct ObsNoiseSpec {
  double epsilon = 1.0;
  Vector omega;  // diagonal of Omega

  double omega_min() const { return omega.minCoeff(); }
  double omega_max() const { return omega.maxCoeff(); }
  std::size_t n() const { return static_cast<std::size_t>(omega.size()); }

  static ObsNoiseSpec isotropic(std::size_t n, double epsilon);
  void validate() const;
};

void lorenz96_drift(const VecRef& x, VecOut out, double forcing = 8.0);
Vector lorenz96_drift(const VecRef& x, double forcing = 8.0);

/// Quadratic term gated on ||x||_inf <= cap, minus x. No constant forcing.
void lorenz96_truncated_drift(const VecRef& x, VecOut out, double cap = 40.0);
Vector lorenz96_truncated_drift(const VecRef& x, double cap = 40.0);

struct LipschitzMetadata {
  std::vector<double> seq;
  double c_f = 0.0;
};

/// Per-distance Lipschitz bounds of the truncated Lorenz 96 drift on the cap box.
LipschitzMetadata lorenz96_lipschitz(double cap, std::size_t n = 40);

/// max_i sum_j F_{d(i,j)} on a ring of n sites.
double lipschitz_row_sum(const std::vector<double>& seq, std::size_t n,
                         DistanceKind dist = DistanceKind::circular);

struct DominationReport {
  double q = 0.0;
  bool holds_dominance = false;
  bool holds_domination = false;
  /// Smallest C_F with F_{d(i,j)} <= C_F phi_{i,j} everywhere; nullopt if infeasible.
  std::optional<double> minimal_c_f;
};

/// Checks diagonal dominance of phi and F_{d(i,j)} <= c_f_candidate * phi_{i,j}.
DominationReport verify_localization_domination(const LocalizationMatrix& phi,
                                                 const std::vector<double>& lipschitz_seq,
                                                 double c_f_candidate);

struct CanonicalSystem {
  DriftModel drift;
  Matrix r_tilde;
  ObsNoiseSpec obs;
  Vector scale_sigma;
};

/// Transforms dX = f(X)dt + sigma dW, dY = H X dt + R dB into the unit-noise,
/// identity-observation form. sigma is the diagonal of a positive diagonal matrix.
/// epsilon <= 0 picks epsilon = max_i [R~ R~^T]_{ii}, which gives omega_min == 1.
CanonicalSystem canonicalize(const Vector& sigma, const Matrix& h, const Matrix& r,
                             const DriftModel& f, double epsilon = -1.0);

}  // namespace enkbf
