#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>

#include "enkbf/locmat.hpp"

namespace enkbf {

/// Covariance stability envelope of the localized filter.
///
/// lambda_max bounds ||P_t||_max after t_star_upper; lambda_min bounds ||P_t||_min
/// from below after t_star_lower. Both scale like sqrt(epsilon) when c_f and the
/// Omega spectrum are fixed.
struct StabilityBounds {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double t_star_upper = 0.0;
  double t_star_lower = 0.0;
};

StabilityBounds stability_bounds(double c_f, double omega_min, double omega_max, double c_phi,
                                 double epsilon);

class RiccatiError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct RiccatiRoots {
  double lower = 0.0;  // y-
  double upper = 0.0;  // y+, the stable equilibrium
};

/// Roots of -(c/eps) y^2 + b y + a = 0. Throws RiccatiError unless they are real and distinct.
RiccatiRoots riccati_roots(double a, double b, double c, double epsilon);

/// Solution at time t of dy/dt = -(c/eps) y^2 + b y + a with y(0) = y0.
double riccati_closed_form(double y0, double a, double b, double c, double epsilon, double t);

/// Green-function weights of the killed index chain built from phi, for target index i
/// (0-based). Solved directly from the first-step equations
///   (1 - q + s_j) v_j - sum_{l != j} phi_{j,l} v_l = (1 - q) [j == i],
/// where s_j is the off-diagonal row sum of row j.
struct LyapunovWeights {
  std::size_t i = 0;
  Vector v;
  double q = 0.0;
};

LyapunovWeights lyapunov_weights(const LocalizationMatrix& phi, double q, std::size_t i);

struct MonteCarloEstimate {
  Vector mean;
  Vector std_error;
};

/// Monte-Carlo estimate of E[sum_{k=1}^T 1{X_k = i} | X_1 = j] for every start j.
/// The chain moves j -> l with probability phi_{j,l}/q and is killed after a
/// geometric(q) number of visits. Multiply by (1 - q) to compare with lyapunov_weights.
MonteCarloEstimate lyapunov_weights_mc(const LocalizationMatrix& phi, double q, std::size_t i,
                                       std::uint64_t samples, std::uint64_t seed);

struct RateDiagnostics {
  double alpha = 0.0;
  double beta = 0.0;
};

RateDiagnostics alpha_beta(double p_min, double p_max, double rho, double c_f, double c_phi,
                           double omega_max, double epsilon);

/// Lower spectral constant of phi: 1 - q when phi is diagonally dominant, otherwise
/// its smallest eigenvalue.
double taper_rho(const LocalizationMatrix& phi);

}  // namespace enkbf
