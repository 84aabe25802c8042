#include <gtest/gtest.h>

#include <cmath>

#include "enkbf/model.hpp"
#include "enkbf/rng.hpp"

using namespace enkbf;

namespace {

Vector rotate(const Vector& x, Eigen::Index k) {
  const Eigen::Index n = x.size();
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out((i + k) % n) = x(i);
  return out;
}

Vector uniform_vector(RandomEngine& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

}  // namespace

TEST(Lorenz96, Examples) {
  const Vector zero = Vector::Zero(40);
  EXPECT_EQ(lorenz96_drift(zero), Vector::Constant(40, 8.0));
  EXPECT_EQ(lorenz96_drift(Vector::Constant(40, 8.0)), Vector::Zero(40));

  Vector x(5);
  x << 1, 2, 3, 4, 5;
  EXPECT_EQ(lorenz96_drift(x)(2), 11.0);
  EXPECT_THROW(lorenz96_drift(Vector::Zero(3)), std::invalid_argument);
}

TEST(Lorenz96, ShiftEquivariance) {
  auto rng = make_engine(5, 0);
  for (int k = 0; k < 20; ++k) {
    const Vector x = uniform_vector(rng, 40, -10, 10);
    for (Eigen::Index s : {1, 7, 39}) {
      EXPECT_EQ(lorenz96_drift(rotate(x, s)), rotate(lorenz96_drift(x), s));
    }
  }
}

TEST(Lorenz96Truncated, Examples) {
  EXPECT_EQ(lorenz96_truncated_drift(Vector::Zero(40)), Vector::Zero(40));
  auto rng = make_engine(6, 0);
  Vector big = uniform_vector(rng, 40, -10, 10);
  big(3) = 50.0;
  EXPECT_EQ(lorenz96_truncated_drift(big), Vector(-big));
  const Vector inside = uniform_vector(rng, 40, -40, 40);
  EXPECT_EQ(lorenz96_truncated_drift(inside), lorenz96_drift(inside, 0.0));
}

TEST(Lorenz96Truncated, ForcingRestoresFullModelInsideCap) {
  const auto trunc = DriftModel::lorenz96_truncated(40, 40.0, 8.0);
  const auto full = DriftModel::lorenz96(40, 8.0);
  auto rng = make_engine(7, 0);
  for (int k = 0; k < 100; ++k) {
    const Vector x = uniform_vector(rng, 40, -40, 40);
    EXPECT_EQ(trunc(x), full(x));
  }
}

TEST(Lipschitz, Metadata) {
  const auto m40 = lorenz96_lipschitz(40.0);
  ASSERT_EQ(m40.seq.size(), 3u);
  EXPECT_EQ(m40.seq[0], 1.0);
  EXPECT_EQ(m40.seq[1], 80.0);
  EXPECT_EQ(m40.seq[2], 40.0);
  EXPECT_EQ(m40.c_f, 241.0);
  EXPECT_EQ(lorenz96_lipschitz(0.0).c_f, 1.0);
  EXPECT_EQ(lorenz96_lipschitz(1.0).c_f, 7.0);
  EXPECT_EQ(DriftModel::lorenz96(40).c_f(), 241.0);
}

TEST(Lipschitz, ShortRangeBoundHoldsOnTheBox) {
  const double cap = 40.0;
  const auto meta = lorenz96_lipschitz(cap, 40);
  auto rng = make_engine(8, 0);
  for (int k = 0; k < 1000; ++k) {
    const Vector x = uniform_vector(rng, 40, -cap, cap);
    const Vector y = uniform_vector(rng, 40, -cap, cap);
    const Vector fx = lorenz96_truncated_drift(x, cap);
    const Vector fy = lorenz96_truncated_drift(y, cap);
    for (std::size_t i = 0; i < 40; ++i) {
      double bound = 0.0;
      for (std::size_t j = 0; j < 40; ++j) {
        const std::size_t d = circ_distance(i + 1, j + 1, 40);
        if (d < meta.seq.size()) bound += meta.seq[d] * std::abs(x(j) - y(j));
      }
      EXPECT_LE(std::abs(fx(i) - fy(i)), bound + 1e-9);
    }
  }
}

TEST(DriftModel, RowSumAndValidation) {
  EXPECT_EQ(lipschitz_row_sum({1.0, 2.0, 3.0}, 40), 1.0 + 4.0 + 6.0);
  EXPECT_THROW(DriftModel(4, [](const VecRef&, VecOut) {}, {1.0, -1.0}), std::invalid_argument);
}

TEST(DriftModel, LinearLipschitzByDistance) {
  Matrix a = Matrix::Zero(5, 5);
  a(0, 1) = -3.0;
  a(2, 2) = 0.5;
  const auto m = DriftModel::linear(a);
  ASSERT_GE(m.lipschitz_seq().size(), 2u);
  EXPECT_EQ(m.lipschitz_seq()[0], 0.5);
  EXPECT_EQ(m.lipschitz_seq()[1], 3.0);
}

TEST(Domination, Examples) {
  const auto id = verify_localization_domination(LocalizationMatrix::identity(6), {1.0}, 1.0);
  EXPECT_TRUE(id.holds_dominance);
  EXPECT_TRUE(id.holds_domination);

  const auto phi = build_localization(40, 1.4);
  const auto meta = lorenz96_lipschitz(40.0);
  const auto rep = verify_localization_domination(phi, meta.seq, 241.0);
  EXPECT_TRUE(rep.holds_dominance);
  ASSERT_TRUE(rep.minimal_c_f.has_value());
  const double expected = std::max({1.0, 80.0 / gaspari_cohn(1.0 / 1.4), 40.0 / gaspari_cohn(2.0 / 1.4)});
  EXPECT_NEAR(*rep.minimal_c_f, expected, 1e-9 * expected);
  EXPECT_EQ(rep.holds_domination, 241.0 >= expected);

  const auto bad = verify_localization_domination(phi, {1.0, 1.0, 1.0, 1.0}, 1e9);
  EXPECT_FALSE(bad.holds_domination);
  EXPECT_FALSE(bad.minimal_c_f.has_value());
}

TEST(Canonicalize, IdentityLeavesSystemUnchanged) {
  const auto f = DriftModel::lorenz96(6);
  Matrix r = 0.1 * Matrix::Identity(6, 6);
  const auto sys = canonicalize(Vector::Ones(6), Matrix::Identity(6, 6), r, f);
  EXPECT_EQ(sys.r_tilde, r);
  auto rng = make_engine(9, 0);
  const Vector x = uniform_vector(rng, 6, -5, 5);
  EXPECT_EQ(sys.drift(x), f(x));
  EXPECT_NEAR(sys.obs.omega_min(), 1.0, 1e-15);
}

TEST(Canonicalize, ScalarScalingKeepsLinearDrift) {
  auto rng = make_engine(10, 0);
  Matrix a(4, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto sys = canonicalize(Vector::Constant(4, 2.0), Matrix::Identity(4, 4), Matrix::Identity(4, 4),
                                DriftModel::linear(a));
  const Vector x = uniform_vector(rng, 4, -3, 3);
  EXPECT_LE((sys.drift(x) - a * x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Canonicalize, NoiseTransform) {
  const auto sys = canonicalize(Vector::Ones(3), 2.0 * Matrix::Identity(3, 3), Matrix::Identity(3, 3),
                                DriftModel::zero(3));
  EXPECT_EQ(sys.r_tilde, Matrix(0.5 * Matrix::Identity(3, 3)));
  Matrix singular = Matrix::Identity(3, 3);
  singular(2, 2) = 0.0;
  EXPECT_THROW(canonicalize(Vector::Ones(3), singular, Matrix::Identity(3, 3), DriftModel::zero(3)),
               std::invalid_argument);
}

TEST(Canonicalize, RoundTrip) {
  auto rng = make_engine(11, 0);
  const Vector sigma = uniform_vector(rng, 8, 0.5, 2.0);
  const auto f = DriftModel::lorenz96(8);
  const auto sys = canonicalize(sigma, Matrix::Identity(8, 8), Matrix::Identity(8, 8), f);
  for (int k = 0; k < 50; ++k) {
    const Vector x = uniform_vector(rng, 8, -10, 10);
    const Vector back = sigma.cwiseProduct(sys.drift(x.cwiseQuotient(sigma)));
    EXPECT_LE((back - f(x)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(ObsNoiseSpec, Validation) {
  auto o = ObsNoiseSpec::isotropic(3, 0.01);
  EXPECT_EQ(o.omega_min(), 1.0);
  o.epsilon = 0.0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
  o.epsilon = 1.0;
  o.omega(1) = 0.0;
  EXPECT_THROW(o.validate(), std::invalid_argument);
}
