#include "enkbf/theory.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "enkbf/rng.hpp"

namespace enkbf {

StabilityBounds stability_bounds(double c_f, double omega_min, double omega_max, double c_phi,
                                 double epsilon) {
  if (!(c_f >= 0.0) || !(omega_min > 0.0) || !(omega_max > 0.0) || !(c_phi > 0.0) ||
      !(epsilon > 0.0)) {
    throw std::invalid_argument("stability_bounds: inputs must be positive");
  }
  StabilityBounds b;
  // Implemented as printed: (2 eps / omega_min) * sqrt(c_f^2 + 3 omega_min / eps).
  b.lambda_max = (2.0 * epsilon / omega_min) * std::sqrt(c_f * c_f + 3.0 * omega_min / epsilon);
  b.lambda_min = epsilon / (3.0 * b.lambda_max * omega_max * c_phi);
  b.t_star_upper = omega_min * epsilon / b.lambda_max;
  b.t_star_lower = b.t_star_upper + 3.0 * b.lambda_min;
  return b;
}

RiccatiRoots riccati_roots(double a, double b, double c, double epsilon) {
  if (!(c > 0.0) || !(epsilon > 0.0)) {
    throw RiccatiError("riccati: c and epsilon must be positive");
  }
  // (c/eps) y^2 - b y - a = 0  =>  y = b eps / (2c) +- sqrt(b^2 eps^2 / (4 c^2) + a eps / c)
  const double centre = b * epsilon / (2.0 * c);
  const double disc = centre * centre + a * epsilon / c;
  if (!(disc > 0.0)) throw RiccatiError("riccati: roots are not real and distinct");
  const double half = std::sqrt(disc);
  return RiccatiRoots{centre - half, centre + half};
}

double riccati_closed_form(double y0, double a, double b, double c, double epsilon, double t) {
  const auto roots = riccati_roots(a, b, c, epsilon);
  const double yp = roots.upper;
  const double ym = roots.lower;
  if (y0 == yp) throw RiccatiError("riccati: y0 equals the stable root (degenerate ratio)");
  if (t == 0.0) return y0;
  if (y0 == ym) return ym;
  const double gap = yp - ym;
  // (y - y-)/(y - y+) = K, K = exp(r t) (y0 - y-)/(y0 - y+)  =>  y = y+ + gap / (K - 1).
  // Written through 1/K to stay finite as K grows.
  const double inv_k = std::exp(-(c / epsilon) * gap * t) * (y0 - yp) / (y0 - ym);
  return yp + gap * inv_k / (1.0 - inv_k);
}

namespace {

void check_lyapunov_args(const LocalizationMatrix& phi, double q, std::size_t i) {
  if (i >= phi.n()) throw std::out_of_range("lyapunov weights: target index out of range");
  if (!(q < 1.0)) throw std::invalid_argument("lyapunov weights: q must be < 1");
  const auto stats = localization_stats(phi);
  if (q < stats.q) {
    std::ostringstream os;
    os << "lyapunov weights: q = " << q << " is below the max off-diagonal row sum " << stats.q;
    throw std::invalid_argument(os.str());
  }
  if (!(q > 0.0) && stats.q > 0.0) {
    throw std::invalid_argument("lyapunov weights: q must be positive");
  }
}

}  // namespace

LyapunovWeights lyapunov_weights(const LocalizationMatrix& phi, double q, std::size_t i) {
  check_lyapunov_args(phi, q, i);
  const auto n = static_cast<Eigen::Index>(phi.n());
  const Matrix& p = phi.entries();
  Matrix a = Matrix::Zero(n, n);
  Vector rhs = Vector::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double off = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      if (l == j) continue;
      off += p(j, l);
      a(j, l) = -p(j, l);
    }
    a(j, j) = 1.0 - q + off;
  }
  rhs(static_cast<Eigen::Index>(i)) = 1.0 - q;
  Vector v = a.fullPivLu().solve(rhs);
  return LyapunovWeights{i, std::move(v), q};
}

MonteCarloEstimate lyapunov_weights_mc(const LocalizationMatrix& phi, double q, std::size_t i,
                                       std::uint64_t samples, std::uint64_t seed) {
  check_lyapunov_args(phi, q, i);
  if (samples < 1) throw std::invalid_argument("lyapunov_weights_mc: samples must be >= 1");
  const std::size_t n = phi.n();

  std::vector<std::discrete_distribution<std::size_t>> transition;
  transition.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> w(n, 0.0);
    double off = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      if (l == j) continue;
      w[l] = q > 0.0 ? phi(j, l) / q : 0.0;
      off += w[l];
    }
    w[j] = std::max(0.0, 1.0 - off);
    transition.emplace_back(w.begin(), w.end());
  }

  MonteCarloEstimate est{Vector::Zero(static_cast<Eigen::Index>(n)),
                         Vector::Zero(static_cast<Eigen::Index>(n))};
  for (std::size_t start = 0; start < n; ++start) {
    auto rng = make_engine(seed, 1000 + start);
    std::bernoulli_distribution survive(q);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::uint64_t s = 0; s < samples; ++s) {
      std::size_t state = start;
      double visits = state == i ? 1.0 : 0.0;
      while (survive(rng)) {
        state = transition[state](rng);
        if (state == i) visits += 1.0;
      }
      sum += visits;
      sum_sq += visits * visits;
    }
    const double m = sum / static_cast<double>(samples);
    const double var =
        samples > 1 ? (sum_sq - static_cast<double>(samples) * m * m) / static_cast<double>(samples - 1)
                    : 0.0;
    est.mean(static_cast<Eigen::Index>(start)) = m;
    est.std_error(static_cast<Eigen::Index>(start)) =
        std::sqrt(std::max(0.0, var) / static_cast<double>(samples));
  }
  return est;
}

RateDiagnostics alpha_beta(double p_min, double p_max, double rho, double c_f, double c_phi,
                           double omega_max, double epsilon) {
  if (!(p_min >= 0.0) || !(p_max >= 0.0) || !(rho >= 0.0) || !(c_f >= 0.0) ||
      !(c_phi > 0.0) || !(omega_max > 0.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("alpha_beta: inputs must be nonnegative (epsilon, C_phi, omega positive)");
  }
  RateDiagnostics r;
  r.alpha = 2.0 / epsilon * rho * p_min - c_f - 1.0;
  r.beta = c_f * c_f * p_max + 2.0 + c_phi * c_phi * omega_max * p_max * p_max / epsilon;
  return r;
}

double taper_rho(const LocalizationMatrix& phi) {
  const auto stats = localization_stats(phi);
  if (stats.diag_dominant) return 1.0 - stats.q;
  return min_eigenvalue(phi.entries());
}

}  // namespace enkbf
