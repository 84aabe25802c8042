#include "enkbf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "enkbf/filter.hpp"

namespace enkbf {

namespace {

class Checker {
 public:
  explicit Checker(SuiteResult& r) : r_(r) {}

  void expect(bool ok, const std::function<std::string()>& describe) {
    ++r_.checks;
    if (!ok && r_.failures.size() < 20) r_.failures.push_back(describe());
  }

 private:
  SuiteResult& r_;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string mat_str(const Matrix& a) {
  std::ostringstream os;
  os.precision(17);
  os << "[";
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    os << (i ? "; " : "");
    for (Eigen::Index j = 0; j < a.cols(); ++j) os << (j ? " " : "") << a(i, j);
  }
  os << "]";
  return os.str();
}

double uniform(RandomEngine& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(RandomEngine& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Matrix random_psd(RandomEngine& rng, Eigen::Index n) {
  Matrix b(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) b(i, j) = uniform(rng, -1.0, 1.0);
  Matrix p = b * b.transpose();
  symmetrize(p);
  return p;
}

/// Nonnegative PSD correlation matrix: normalized Gram matrix of nonnegative vectors.
LocalizationMatrix random_psd_taper(RandomEngine& rng, Eigen::Index n) {
  Matrix b(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) b(i, j) = uniform(rng, 0.0, 1.0) * (uniform(rng, 0, 1) < 0.5);
  for (Eigen::Index i = 0; i < n; ++i) b(i, i) += 0.5;
  Matrix g = b * b.transpose();
  Matrix phi(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) phi(i, j) = g(i, j) / std::sqrt(g(i, i) * g(j, j));
  symmetrize(phi);
  phi.diagonal().setOnes();
  return LocalizationMatrix::from_entries(phi);
}

// ---------------------------------------------------------------------------

SuiteResult suite_norms(const VerifyOptions& o) {
  SuiteResult r{"norms", 0, {}};
  Checker c(r);
  auto rng = make_engine(o.seed, 101);
  for (std::uint64_t k = 0; k < o.instances; ++k) {
    const auto n = static_cast<Eigen::Index>(pick(rng, 1, 12));
    Matrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) a(i, j) = uniform(rng, -1.0, 1.0);
    const double op = op_norm(a);
    const double bound = std::sqrt(one_norm(a) * one_norm(a.transpose()));
    c.expect(max_abs_norm(a) <= op + o.tol,
             [&] { return "max_abs > op_norm for A = " + mat_str(a); });
    c.expect(op <= bound + o.tol, [&] { return "op_norm > sqrt(|A|_1 |A^T|_1) for A = " + mat_str(a); });
  }
  // Random PSD: the max-abs entry sits on the diagonal.
  for (std::uint64_t k = 0; k < o.instances; ++k) {
    const Matrix p = random_psd(rng, 5);
    c.expect(max_abs_norm(p) == p.diagonal().maxCoeff(),
             [&] { return "PSD max_abs off the diagonal for P = " + mat_str(p); });
  }
  return r;
}

SuiteResult suite_schur(const VerifyOptions& o) {
  SuiteResult r{"schur", 0, {}};
  Checker c(r);
  auto rng = make_engine(o.seed, 102);
  for (std::uint64_t k = 0; k < o.instances; ++k) {
    const auto n = static_cast<Eigen::Index>(pick(rng, 1, 8));
    // Alternate between ring tapers from the configured taper and random PSD tapers.
    const LocalizationMatrix phi =
        (k % 2 == 0 && n >= 2)
            ? build_localization(static_cast<std::size_t>(n), uniform(rng, 0.3, 3.0), circ_distance, o.taper)
            : random_psd_taper(rng, n);
    const Matrix p = random_psd(rng, n);
    const Matrix q = random_psd(rng, n);
    const Matrix pl = schur_localize(p, phi);
    const Matrix ql = schur_localize(q, phi);

    // Claim 1: diagonal of (P o phi) Q equals that of P (Q o phi).
    const Matrix lhs = pl * q;
    const Matrix rhs = p * ql;
    for (Eigen::Index i = 0; i < n; ++i) {
      c.expect(std::abs(lhs(i, i) - rhs(i, i)) <= o.tol * std::max(1.0, std::abs(lhs(i, i))), [&] {
        return "diag mismatch at " + std::to_string(i) + " for phi = " + mat_str(phi.entries());
      });
    }

    // Claim 3: localization keeps the max-abs norm of a PSD matrix.
    c.expect(max_abs_norm(pl) == max_abs_norm(p) && max_abs_norm(p) == p.diagonal().maxCoeff(),
             [&] { return "max-abs norm changed by localization, P = " + mat_str(p); });

    // Claim 4: op norm <= 1-norm <= C_phi |P|_max.
    const double c_phi = localization_stats(phi).c_phi;
    const double op = op_norm(pl);
    const double one = one_norm(pl);
    c.expect(op <= one + o.tol && one <= c_phi * max_abs_norm(p) + o.tol, [&] {
      return "norm chain broken: op " + fmt(op) + ", one " + fmt(one) + ", C_phi |P|_max " +
             fmt(c_phi * max_abs_norm(p));
    });

    // PSD-taper claims: Schur product theorem and order preservation.
    if (min_eigenvalue(phi.entries()) >= -o.tol) {
      c.expect(min_eigenvalue(pl) >= -o.tol * std::max(1.0, max_abs_norm(p)),
               [&] { return "P o phi not PSD for phi = " + mat_str(phi.entries()); });
      const Matrix qq = p + q;  // P <= P + Q
      const Matrix diff = schur_localize(qq, phi) - pl;
      c.expect(min_eigenvalue(diff) >= -o.tol * std::max(1.0, max_abs_norm(qq)),
               [&] { return "order not preserved for phi = " + mat_str(phi.entries()); });
    }
  }
  return r;
}

SuiteResult suite_taper(const VerifyOptions& o) {
  SuiteResult r{"taper", 0, {}};
  Checker c(r);
  const auto& rho = o.taper;
  const double lip = 2.0;  // |rho'| <= 1 on [0, 2]; factor 2 leaves room
  c.expect(std::abs(rho(0.0) - 1.0) <= o.tol, [&] { return "rho(0) = " + fmt(rho(0.0)); });
  c.expect(rho(2.0) == 0.0 && rho(3.5) == 0.0, [&] { return "rho nonzero beyond the support"; });
  for (double h : {1e-3, 1e-6}) {
    const double jump1 = std::abs(rho(1.0 - h) - rho(1.0 + h));
    c.expect(jump1 <= lip * 2.0 * h + o.tol, [&] {
      return "discontinuity at 1: |rho(1-h) - rho(1+h)| = " + fmt(jump1) + " at h = " + fmt(h);
    });
    const double tail = std::abs(rho(2.0 - h));
    c.expect(tail <= lip * h + o.tol,
             [&] { return "discontinuity at 2: |rho(2-h)| = " + fmt(tail) + " at h = " + fmt(h); });
  }
  auto rng = make_engine(o.seed, 103);
  for (std::uint64_t k = 0; k < o.instances; ++k) {
    const double x = uniform(rng, 0.0, 2.5);
    const double h = std::pow(10.0, uniform(rng, -9.0, -3.0));
    const double d = std::abs(rho(x + h) - rho(x));
    c.expect(d <= lip * h + o.tol, [&] {
      return "rho jumps by " + fmt(d) + " between " + fmt(x) + " and " + fmt(x + h);
    });
    const double v = rho(x);
    c.expect(v >= -o.tol && v <= 1.0 + o.tol, [&] { return "rho(" + fmt(x) + ") = " + fmt(v); });
  }
  return r;
}

LocalizationMatrix random_dominant_taper(RandomEngine& rng, std::size_t n, double target_q) {
  Matrix phi = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const double density = uniform(rng, 0.2, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (uniform(rng, 0.0, 1.0) < density) {
        const double w = uniform(rng, 0.0, 1.0);
        phi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w;
        phi(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = w;
      }
    }
  }
  double max_row = 0.0;
  for (Eigen::Index i = 0; i < phi.rows(); ++i) max_row = std::max(max_row, phi.row(i).sum() - 1.0);
  if (max_row > 0.0) {
    const double s = target_q / max_row;
    for (Eigen::Index i = 0; i < phi.rows(); ++i)
      for (Eigen::Index j = 0; j < phi.cols(); ++j)
        if (i != j) phi(i, j) *= s;
  }
  return LocalizationMatrix::from_entries(phi);
}

SuiteResult suite_lyapunov(const VerifyOptions& o) {
  SuiteResult r{"lyapunov", 0, {}};
  Checker c(r);
  auto rng = make_engine(o.seed, 104);
  for (std::uint64_t k = 0; k < o.lyapunov_instances; ++k) {
    const std::size_t n = pick(rng, 1, 12);
    const auto phi = random_dominant_taper(rng, n, uniform(rng, 0.05, 0.9));
    const auto stats = localization_stats(phi);
    const double q = std::min(0.95, stats.q + uniform(rng, 0.0, 0.05));
    const std::size_t i = pick(rng, 0, n - 1);
    const auto w = lyapunov_weights(phi, q, i);
    const Matrix& f = phi.entries();
    auto where = [&] { return " (n = " + std::to_string(n) + ", q = " + fmt(q) + ", phi = " + mat_str(f) + ")"; };
    for (std::size_t j = 0; j < n; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      c.expect(w.v(jj) >= -o.tol, [&] { return "negative weight v_" + std::to_string(j) + where(); });
      double off = 0.0;
      for (std::size_t l = 0; l < n; ++l) {
        if (l != j) off += f(jj, static_cast<Eigen::Index>(l)) * w.v(static_cast<Eigen::Index>(l));
      }
      c.expect(off <= w.v(jj) + o.tol, [&] { return "superharmonic bound fails at " + std::to_string(j) + where(); });
    }
    c.expect(w.v(static_cast<Eigen::Index>(i)) >= 1.0 - q - o.tol, [&] { return "v_i < 1 - q" + where(); });
    c.expect(w.v.sum() <= 1.0 + o.tol, [&] { return "sum of weights " + fmt(w.v.sum()) + " > 1" + where(); });
    c.expect(1.0 - stats.q <= min_eigenvalue(f) + o.tol, [&] { return "1 - q above the smallest eigenvalue" + where(); });
  }

  // Two-node hand solution.
  Matrix two(2, 2);
  two << 1.0, 0.2, 0.2, 1.0;
  const auto phi2 = LocalizationMatrix::from_entries(two);
  const auto w2 = lyapunov_weights(phi2, 0.2, 0);
  c.expect(std::abs(w2.v(0) - 5.0 / 6.0) <= 4e-16 && std::abs(w2.v(1) - 1.0 / 6.0) <= 4e-16, [&] {
    return "two-node solve gave (" + fmt(w2.v(0)) + ", " + fmt(w2.v(1)) + "), expected (5/6, 1/6)";
  });

  // Monte-Carlo cross-check with the (1 - q) reconciliation factor.
  const auto mc = lyapunov_weights_mc(phi2, 0.2, 0, o.mc_samples, o.seed);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double scaled = 0.8 * mc.mean(j);
    const double se = 0.8 * mc.std_error(j);
    c.expect(std::abs(scaled - w2.v(j)) <= 3.0 * se, [&] {
      return "MC entry " + std::to_string(j) + " = " + fmt(scaled) + " vs solve " + fmt(w2.v(j)) +
             " (3 SE = " + fmt(3.0 * se) + ")";
    });
  }
  const auto ident = LocalizationMatrix::identity(3);
  const auto mci = lyapunov_weights_mc(ident, 0.5, 2, o.mc_samples, o.seed + 1);
  c.expect(std::abs(mci.mean(2) - 2.0) <= 3.0 * mci.std_error(2), [&] {
    return "identity taper: MC visits " + fmt(mci.mean(2)) + ", expected 1/(1-q) = 2";
  });
  c.expect(mci.mean(0) == 0.0 && mci.mean(1) == 0.0, [&] { return "unreachable target visited"; });
  return r;
}

double rk4_riccati(double y0, double a, double b, double c, double eps, double t) {
  auto g = [&](double y) { return -(c / eps) * y * y + b * y + a; };
  const double rate = std::abs(b) + (c / eps) * (std::abs(y0) + 10.0);
  const auto steps = static_cast<std::uint64_t>(std::ceil(t * std::max(1e4, 50.0 * rate)));
  const double h = t / static_cast<double>(steps);
  double y = y0;
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double k1 = g(y);
    const double k2 = g(y + 0.5 * h * k1);
    const double k3 = g(y + 0.5 * h * k2);
    const double k4 = g(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

SuiteResult suite_riccati(const VerifyOptions& o) {
  SuiteResult r{"riccati", 0, {}};
  Checker c(r);
  auto rng = make_engine(o.seed, 105);
  for (std::uint64_t k = 0; k < o.riccati_sets; ++k) {
    const double eps = uniform(rng, 0.01, 1.0);
    const double a = uniform(rng, 0.1, 3.0);
    const double b = uniform(rng, -1.0, 1.0);
    const double cc = uniform(rng, 0.5, 2.0);
    const auto roots = riccati_roots(a, b, cc, eps);
    double y0 = uniform(rng, roots.lower + 1e-3, roots.upper + 3.0);
    if (y0 == roots.upper) y0 += 0.1;
    auto where = [&] {
      return " (a " + fmt(a) + ", b " + fmt(b) + ", c " + fmt(cc) + ", eps " + fmt(eps) + ", y0 " + fmt(y0) + ")";
    };
    for (double t : {0.1, 1.0}) {
      const double closed = riccati_closed_form(y0, a, b, cc, eps, t);
      const double ode = rk4_riccati(y0, a, b, cc, eps, t);
      c.expect(std::abs(closed - ode) <= 1e-8 * std::max(1.0, std::abs(ode)), [&] {
        return "closed form " + fmt(closed) + " vs RK4 " + fmt(ode) + " at t = " + fmt(t) + where();
      });
    }
    c.expect(riccati_closed_form(y0, a, b, cc, eps, 0.0) == y0, [&] { return "y(0) != y0" + where(); });
    // Monotone approach to the stable root.
    double prev = y0;
    bool monotone = true;
    for (int s = 1; s <= 50; ++s) {
      const double y = riccati_closed_form(y0, a, b, cc, eps, 0.02 * s);
      if ((y0 < roots.upper && y < prev - 1e-14) || (y0 > roots.upper && y > prev + 1e-14)) monotone = false;
      prev = y;
    }
    c.expect(monotone, [&] { return "non-monotone approach to the stable root" + where(); });
  }
  for (double eps : {1e-4, 1e-2, 0.5}) {
    const double lim = riccati_roots(2.0, 0.0, 1.0, eps).upper;
    c.expect(std::abs(lim - std::sqrt(2.0 * eps)) <= o.tol,
             [&] { return "stable root " + fmt(lim) + " != sqrt(2 eps) at eps = " + fmt(eps); });
    const double late = riccati_closed_form(0.0, 2.0, 0.0, 1.0, eps, 100.0);
    c.expect(std::abs(late - std::sqrt(2.0 * eps)) <= o.tol,
             [&] { return "late-time value " + fmt(late) + " != sqrt(2 eps) at eps = " + fmt(eps); });
  }
  return r;
}

SuiteResult suite_stability(const VerifyOptions&) {
  SuiteResult r{"stability", 0, {}};
  Checker c(r);
  const std::vector<double> grid{1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  for (double c_f : {0.0, 1.0, 241.0}) {
    for (auto [w_min, w_max] : {std::pair{1.0, 1.0}, std::pair{0.5, 2.0}}) {
      for (double c_phi : {1.0, 1.977}) {
        const double lo = 2.0 * std::sqrt(3.0 / w_min);
        const double hi = (2.0 / w_min) * std::sqrt(grid.back() * c_f * c_f + 3.0 * w_min);
        for (double eps : grid) {
          const auto b = stability_bounds(c_f, w_min, w_max, c_phi, eps);
          const double up = b.lambda_max / std::sqrt(eps);
          const double down = b.lambda_min / std::sqrt(eps);
          auto where = [&] { return " at eps " + fmt(eps) + ", c_f " + fmt(c_f) + ", C_phi " + fmt(c_phi); };
          c.expect(up >= lo * (1 - 1e-12) && up <= hi * (1 + 1e-12),
                   [&] { return "lambda_max / sqrt(eps) = " + fmt(up) + " outside bracket" + where(); });
          c.expect(down >= 1.0 / (3.0 * w_max * c_phi * hi) * (1 - 1e-12) &&
                       down <= 1.0 / (3.0 * w_max * c_phi * lo) * (1 + 1e-12),
                   [&] { return "lambda_min / sqrt(eps) = " + fmt(down) + " outside bracket" + where(); });
          if (eps <= 1e-2) {
            c.expect(b.lambda_min <= b.lambda_max, [&] { return "lambda_min > lambda_max" + where(); });
          }
          const auto rates = alpha_beta(b.lambda_min, b.lambda_max, 1.0, c_f, c_phi, w_max, eps);
          const double beta_cap = c_f * c_f * hi * std::sqrt(grid.back()) + 2.0 + c_phi * c_phi * w_max * hi * hi;
          c.expect(rates.beta > 0.0 && rates.beta <= beta_cap * (1 + 1e-12),
                   [&] { return "beta = " + fmt(rates.beta) + " not bounded" + where(); });
        }
      }
    }
  }
  const auto b0 = stability_bounds(0.0, 1.0, 1.0, 1.0, 0.01);
  c.expect(std::abs(b0.lambda_max - 2.0 * std::sqrt(3.0) * 0.1) <= 1e-14,
           [&] { return "c_f = 0 gives lambda_max = " + fmt(b0.lambda_max); });
  return r;
}

// ---------------------------------------------------------------------------
// Filter consistency

/// Right-hand side of the deterministic particle flow (no observation increment),
/// written with dense products.
Matrix particle_flow(const Matrix& x, const LocalizationMatrix& phi, const Vector& omega, double eps,
                     const DriftModel& model) {
  const Eigen::Index m = x.cols();
  const Vector mean = x.rowwise().mean();
  const Matrix a = x.colwise() - mean;
  const Matrix p = a * a.transpose() / static_cast<double>(m - 1);
  const Matrix pl = p.cwiseProduct(phi.entries());
  const Matrix pd = p.diagonal().cwiseInverse().asDiagonal();
  const Matrix gain = pl * omega.asDiagonal();
  Matrix out(x.rows(), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    out.col(k) = model(x.col(k)) + pd * a.col(k) - (0.5 / eps) * gain * (x.col(k) + mean);
  }
  return out;
}

Matrix rk4_flow(const Matrix& x, double h, const LocalizationMatrix& phi, const Vector& omega,
                double eps, const DriftModel& model) {
  const Matrix k1 = particle_flow(x, phi, omega, eps, model);
  const Matrix k2 = particle_flow(x + 0.5 * h * k1, phi, omega, eps, model);
  const Matrix k3 = particle_flow(x + 0.5 * h * k2, phi, omega, eps, model);
  const Matrix k4 = particle_flow(x + h * k3, phi, omega, eps, model);
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Matrix sample_cov(const Matrix& x) {
  const Matrix a = x.colwise() - x.rowwise().mean();
  return a * a.transpose() / static_cast<double>(x.cols() - 1);
}

Matrix random_particles(RandomEngine& rng, Eigen::Index n, Eigen::Index m) {
  Matrix x(n, m);
  Vector draw(n);
  for (Eigen::Index k = 0; k < m; ++k) {
    fill_normal(rng, draw);
    x.col(k) = Vector::Constant(n, 8.0) + draw;
  }
  return x;
}

class MemorySource : public ObservationSource {
 public:
  MemorySource(std::vector<ObservationRecord> recs, std::size_t n, double dt, double eps)
      : recs_(std::move(recs)), n_(n), dt_(dt), eps_(eps) {}
  std::size_t n() const override { return n_; }
  double dt() const override { return dt_; }
  double epsilon() const override { return eps_; }
  bool next(ObservationRecord& rec) override {
    if (pos_ == recs_.size()) return false;
    rec = recs_[pos_++];
    return true;
  }

 private:
  std::vector<ObservationRecord> recs_;
  std::size_t n_;
  double dt_;
  double eps_;
  std::size_t pos_ = 0;
};

SuiteResult suite_filter(const VerifyOptions& o) {
  SuiteResult r{"filter", 0, {}};
  Checker c(r);
  auto rng = make_engine(o.seed, 106);

  // Mean of the stepped ensemble against the mean equation; band kernel against the dense step.
  for (std::uint64_t k = 0; k < o.filter_instances; ++k) {
    const std::size_t n = pick(rng, 4, 12);
    const std::size_t m = pick(rng, 2, 10);
    const double eps = uniform(rng, 0.05, 1.0);
    const double dt = 1e-3;
    const FilterConfig cfg(build_localization(n, uniform(rng, 0.5, 3.0)), ObsNoiseSpec::isotropic(n, eps), dt,
                           k % 3 != 0, -1.0, false);
    const auto model = DriftModel::lorenz96(n);
    const Ensemble ens(random_particles(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)));
    ObservationRecord obs;
    obs.delta_y.resize(static_cast<Eigen::Index>(n));
    fill_normal(rng, obs.delta_y);
    obs.delta_y = obs.delta_y * std::sqrt(dt) + ens.mean() * dt;

    const Ensemble next = filter_step(ens, obs, cfg, model);
    const Vector moved = next.mean() - ens.mean();
    const Vector predicted = mean_increment(ens, obs, cfg, model);
    const double err = (moved - predicted).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, predicted.cwiseAbs().maxCoeff());
    c.expect(err <= o.tol * scale, [&] {
      return "mean increment off by " + fmt(err) + " (n " + std::to_string(n) + ", M " + std::to_string(m) + ")";
    });

    const Matrix dense = reference::filter_step(ens.particles(), obs.delta_y, cfg, model);
    const double gap = (dense - next.particles()).cwiseAbs().maxCoeff();
    c.expect(gap <= 1e-12 * std::max(1.0, dense.cwiseAbs().maxCoeff()),
             [&] { return "band kernel differs from dense step by " + fmt(gap); });
  }

  // Covariance right-hand side: forward difference error halves with h.
  for (int inst = 0; inst < 10; ++inst) {
    const Eigen::Index n = 6, m = 5;
    const double eps = 0.5;
    const auto phi = build_localization(n, 1.4);
    const Vector omega = Vector::Ones(n);
    const FilterConfig cfg(phi, ObsNoiseSpec::isotropic(n, eps), 1e-3, true, -1.0, false);
    const auto model = DriftModel::lorenz96(n);
    const Matrix x = random_particles(rng, n, m);
    const Matrix p0 = sample_cov(x);
    const Matrix rhs = cov_ode_rhs(Ensemble(x), cfg, model);
    auto fd_err = [&](double h) {
      const Matrix ph = sample_cov(rk4_flow(x, h, phi, omega, eps, model));
      return ((ph - p0) / h - rhs).cwiseAbs().maxCoeff();
    };
    const double e1 = fd_err(1e-5);
    const double e2 = fd_err(5e-6);
    const double ratio = e2 / e1;
    c.expect(ratio > 0.4 && ratio < 0.6, [&] {
      return "finite-difference error ratio " + fmt(ratio) + " (errors " + fmt(e1) + ", " + fmt(e2) + ")";
    });
  }

  // Diagonal inverse identity along a short assimilation run.
  {
    const std::size_t n = 40;
    const double eps = 0.01, dt = 1e-4;
    const auto model = DriftModel::lorenz96(n);
    const auto obs_spec = ObsNoiseSpec::isotropic(n, eps);
    auto truth = spinup_init(n, 8.0, 1.0, o.seed);
    auto truth_rng = make_engine(o.seed, Stream::truth);
    auto obs_rng = make_engine(o.seed, Stream::observation);
    std::vector<ObservationRecord> recs;
    for (std::uint64_t k = 0; k < o.run_steps; ++k) {
      recs.push_back(observe_increment(truth, dt, obs_spec, obs_rng, k));
      truth = step_truth(truth, dt, model, truth_rng);
    }
    auto ens_rng = make_engine(o.seed, Stream::ensemble);
    MemorySource src(std::move(recs), n, dt, eps);
    const FilterConfig cfg(build_localization(n, 1.4), obs_spec, dt);
    RunOptions opts;
    opts.keep_means = false;
    const auto run = run_filter(src, cfg, model, init_ensemble(truth.x, 10, ens_rng), opts);
    c.expect(run.steps == o.run_steps && run.violations.inverse == 0 && run.max_di_residual <= o.tol,
             [&] { return "max |[P^dagger P]_ii - 1| = " + fmt(run.max_di_residual); });
  }
  return r;
}

using SuiteFn = SuiteResult (*)(const VerifyOptions&);

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
  static const std::vector<std::pair<std::string, SuiteFn>> r{
      {"norms", suite_norms},       {"schur", suite_schur},         {"taper", suite_taper},
      {"lyapunov", suite_lyapunov}, {"riccati", suite_riccati},     {"stability", suite_stability},
      {"filter", suite_filter},
  };
  return r;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, fn] : registry()) v.push_back(name);
    return v;
  }();
  return names;
}

SuiteResult run_suite(const std::string& name, const VerifyOptions& opts) {
  for (const auto& [n, fn] : registry()) {
    if (n == name) {
      try {
        return fn(opts);
      } catch (const std::exception& e) {
        return SuiteResult{name, 1, {std::string("exception: ") + e.what()}};
      }
    }
  }
  throw std::invalid_argument("unknown suite '" + name + "'");
}

std::vector<SuiteResult> run_suites(const std::string& selector, const VerifyOptions& opts) {
  if (!selector.empty()) return {run_suite(selector, opts)};
  std::vector<SuiteResult> out;
  for (const auto& name : suite_names()) out.push_back(run_suite(name, opts));
  return out;
}

}  // namespace enkbf
