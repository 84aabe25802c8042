#include <gtest/gtest.h>

#include <cmath>

#include "enkbf/rng.hpp"
#include "enkbf/theory.hpp"

using namespace enkbf;

namespace {

double rk4(double y0, double a, double b, double c, double eps, double t, int steps) {
  auto g = [&](double y) { return -(c / eps) * y * y + b * y + a; };
  const double h = t / steps;
  double y = y0;
  for (int k = 0; k < steps; ++k) {
    const double k1 = g(y), k2 = g(y + 0.5 * h * k1), k3 = g(y + 0.5 * h * k2), k4 = g(y + h * k3);
    y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return y;
}

}  // namespace

TEST(StabilityBounds, ZeroLipschitzClosedForm) {
  for (double eps : {1e-4, 1e-2, 0.3}) {
    const auto b = stability_bounds(0.0, 1.0, 1.0, 1.0, eps);
    EXPECT_NEAR(b.lambda_max, 2.0 * std::sqrt(3.0) * std::sqrt(eps), 1e-14);
  }
}

TEST(StabilityBounds, PrintedFormulasAtReferenceEpsilon) {
  const double eps = 0.01, c_phi = 1.977;
  const auto b = stability_bounds(241.0, 1.0, 1.0, c_phi, eps);
  const double lmax = 2.0 * eps * std::sqrt(241.0 * 241.0 + 3.0 / eps);
  EXPECT_DOUBLE_EQ(b.lambda_max, lmax);
  EXPECT_DOUBLE_EQ(b.lambda_min, eps / (3.0 * lmax * c_phi));
  EXPECT_DOUBLE_EQ(b.t_star_upper, eps / lmax);
  EXPECT_DOUBLE_EQ(b.t_star_lower, eps / lmax + 3.0 * b.lambda_min);
  EXPECT_NEAR(b.lambda_max, 4.83, 0.01);
  EXPECT_LE(b.lambda_min, b.lambda_max);
}

TEST(StabilityBounds, SqrtEpsilonScaling) {
  double lo = 1e300, hi = 0.0;
  for (double eps = 1e-4; eps <= 0.1 + 1e-12; eps *= std::sqrt(10.0)) {
    const auto b = stability_bounds(7.0, 1.0, 1.0, 1.5, eps);
    lo = std::min(lo, b.lambda_max / std::sqrt(eps));
    hi = std::max(hi, b.lambda_max / std::sqrt(eps));
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi / lo, 10.0);
}

TEST(Riccati, RootsAndLimit) {
  for (double eps : {1e-3, 0.01, 0.2}) {
    const auto r = riccati_roots(2.0, 0.0, 1.0, eps);
    EXPECT_NEAR(r.upper, std::sqrt(2.0 * eps), 1e-15);
    EXPECT_NEAR(r.lower, -std::sqrt(2.0 * eps), 1e-15);
    EXPECT_NEAR(riccati_closed_form(0.0, 2.0, 0.0, 1.0, eps, 1e3), std::sqrt(2.0 * eps), 1e-10);
  }
  // With b != 0 the stable root satisfies the quadratic.
  const auto r = riccati_roots(0.7, 0.9, 1.3, 0.2);
  EXPECT_NEAR(-(1.3 / 0.2) * r.upper * r.upper + 0.9 * r.upper + 0.7, 0.0, 1e-12);
  EXPECT_GT(r.upper, r.lower);
}

TEST(Riccati, ClosedFormMatchesRk4) {
  auto rng = make_engine(21, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    const double eps = 0.05 + u(rng), a = 0.1 + 2 * u(rng), b = 2 * u(rng) - 1, c = 0.5 + u(rng);
    const auto roots = riccati_roots(a, b, c, eps);
    const double y0 = roots.lower + 0.1 + 3 * u(rng);
    if (y0 == roots.upper) continue;
    EXPECT_EQ(riccati_closed_form(y0, a, b, c, eps, 0.0), y0);
    for (double t : {0.1, 1.0}) {
      EXPECT_NEAR(riccati_closed_form(y0, a, b, c, eps, t), rk4(y0, a, b, c, eps, t, 20000), 1e-8);
    }
  }
}

TEST(Riccati, Errors) {
  const auto r = riccati_roots(2.0, 0.0, 1.0, 0.01);
  EXPECT_THROW(riccati_closed_form(r.upper, 2.0, 0.0, 1.0, 0.01, 1.0), RiccatiError);
  EXPECT_THROW(riccati_roots(-5.0, 0.0, 1.0, 1.0), RiccatiError);  // complex roots
  EXPECT_EQ(riccati_closed_form(r.lower, 2.0, 0.0, 1.0, 0.01, 3.0), r.lower);
}

TEST(Lyapunov, SingleNode) {
  const auto w = lyapunov_weights(LocalizationMatrix::identity(1), 0.3, 0);
  ASSERT_EQ(w.v.size(), 1);
  EXPECT_DOUBLE_EQ(w.v(0), 1.0);
}

TEST(Lyapunov, TwoNodeHandSolution) {
  Matrix f(2, 2);
  f << 1, 0.2, 0.2, 1;
  const auto w = lyapunov_weights(LocalizationMatrix::from_entries(f), 0.2, 0);
  EXPECT_NEAR(w.v(0), 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(w.v(1), 1.0 / 6.0, 1e-15);
}

TEST(Lyapunov, IdentityGivesUnitVector) {
  const auto w = lyapunov_weights(LocalizationMatrix::identity(5), 0.5, 2);
  Vector e = Vector::Zero(5);
  e(2) = 1.0;
  EXPECT_EQ(w.v, e);
}

TEST(Lyapunov, ArgumentChecks) {
  Matrix f(2, 2);
  f << 1, 0.4, 0.4, 1;
  const auto phi = LocalizationMatrix::from_entries(f);
  EXPECT_THROW(lyapunov_weights(phi, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(lyapunov_weights(phi, 0.3, 0), std::invalid_argument);
  EXPECT_THROW(lyapunov_weights(phi, 0.5, 2), std::out_of_range);
}

TEST(Lyapunov, ClaimsOnRingTaper) {
  const auto phi = build_localization(12, 1.4);
  const double q = localization_stats(phi).q;
  for (std::size_t i = 0; i < 12; ++i) {
    const auto w = lyapunov_weights(phi, q, i);
    EXPECT_GE(w.v.minCoeff(), -1e-10);
    EXPECT_GE(w.v(static_cast<Eigen::Index>(i)), 1.0 - q - 1e-10);
    EXPECT_LE(w.v.sum(), 1.0 + 1e-10);
    for (Eigen::Index j = 0; j < 12; ++j) {
      const double off = phi.entries().row(j).dot(w.v) - w.v(j);
      EXPECT_LE(off, w.v(j) + 1e-10);
    }
  }
}

TEST(LyapunovMonteCarlo, IdentityVisitsGeometricMean) {
  const auto mc = lyapunov_weights_mc(LocalizationMatrix::identity(3), 0.5, 1, 100000, 5);
  EXPECT_NEAR(mc.mean(1), 2.0, 3.0 * mc.std_error(1));
  EXPECT_EQ(mc.mean(0), 0.0);
  EXPECT_EQ(mc.mean(2), 0.0);
}

TEST(LyapunovMonteCarlo, ReconciledWithSolve) {
  Matrix f(2, 2);
  f << 1, 0.2, 0.2, 1;
  const auto phi = LocalizationMatrix::from_entries(f);
  const auto w = lyapunov_weights(phi, 0.2, 0);
  const auto mc = lyapunov_weights_mc(phi, 0.2, 0, 100000, 6);
  for (Eigen::Index j = 0; j < 2; ++j) {
    EXPECT_NEAR(0.8 * mc.mean(j), w.v(j), 3.0 * 0.8 * mc.std_error(j));
  }
  const auto again = lyapunov_weights_mc(phi, 0.2, 0, 1000, 6);
  const auto again2 = lyapunov_weights_mc(phi, 0.2, 0, 1000, 6);
  EXPECT_EQ(again.mean, again2.mean);
}

TEST(AlphaBeta, Examples) {
  const auto r0 = alpha_beta(0.0, 1.0, 0.9, 5.0, 1.5, 1.0, 0.1);
  EXPECT_DOUBLE_EQ(r0.alpha, -5.0 - 1.0);
  EXPECT_DOUBLE_EQ(r0.beta, 25.0 + 2.0 + 1.5 * 1.5 * 1.0 / 0.1);
  EXPECT_GT(r0.beta, 0.0);

  const auto a = alpha_beta(0.3, 0.5, 0.8, 0.0, 1.0, 1.0, 0.1);
  const auto b = alpha_beta(0.3, 0.5, 0.8, 0.0, 1.0, 1.0, 0.2);
  EXPECT_NEAR((a.alpha + 1.0) / (b.alpha + 1.0), 2.0, 1e-12);
  EXPECT_NEAR((a.beta - 2.0) / (b.beta - 2.0), 2.0, 1e-12);
}

TEST(TaperRho, DominantAndGeneral) {
  const auto phi = build_localization(40, 1.4);
  const auto s = localization_stats(phi);
  EXPECT_DOUBLE_EQ(taper_rho(phi), 1.0 - s.q);
  EXPECT_LE(1.0 - s.q, min_eigenvalue(phi.entries()) + 1e-10);
  const auto ones = LocalizationMatrix::all_ones(3);
  EXPECT_NEAR(taper_rho(ones), 0.0, 1e-12);
}
