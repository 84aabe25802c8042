#include "enkbf/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace enkbf {

namespace {

void require_l96_size(Eigen::Index n) {
  if (n < 4) {
    std::ostringstream os;
    os << "Lorenz 96 drift needs n >= 4, got " << n;
    throw std::invalid_argument(os.str());
  }
}

// Quadratic advection term (x_{s+1} - x_{s-2}) x_{s-1} with periodic wrap.
inline double advection(const VecRef& x, Eigen::Index s, Eigen::Index n) {
  const Eigen::Index p1 = s + 1 == n ? 0 : s + 1;
  const Eigen::Index m1 = s == 0 ? n - 1 : s - 1;
  const Eigen::Index m2 = s >= 2 ? s - 2 : s + n - 2;
  return (x(p1) - x(m2)) * x(m1);
}

}  // namespace

DriftModel::DriftModel(std::size_t n, DriftFn drift, std::vector<double> lipschitz_seq,
                       DistanceKind dist, std::string name)
    : n_(n),
      drift_(std::move(drift)),
      lipschitz_(std::move(lipschitz_seq)),
      dist_(dist),
      name_(std::move(name)) {
  for (double v : lipschitz_) {
    if (!(v >= 0.0)) throw std::invalid_argument("Lipschitz sequence must be nonnegative");
  }
  c_f_ = lipschitz_row_sum(lipschitz_, n_, dist_);
}

Vector DriftModel::operator()(const VecRef& x) const {
  Vector out(x.size());
  drift_(x, out);
  return out;
}

void lorenz96_drift(const VecRef& x, VecOut out, double forcing) {
  const Eigen::Index n = x.size();
  require_l96_size(n);
  for (Eigen::Index s = 0; s < n; ++s) out(s) = advection(x, s, n) - x(s) + forcing;
}

Vector lorenz96_drift(const VecRef& x, double forcing) {
  Vector out(x.size());
  lorenz96_drift(x, out, forcing);
  return out;
}

void lorenz96_truncated_drift(const VecRef& x, VecOut out, double cap) {
  const Eigen::Index n = x.size();
  require_l96_size(n);
  if (!(cap > 0.0)) throw std::invalid_argument("truncation cap must be > 0");
  const bool inside = x.cwiseAbs().maxCoeff() <= cap;
  for (Eigen::Index s = 0; s < n; ++s) {
    out(s) = (inside ? advection(x, s, n) : 0.0) - x(s);
  }
}

Vector lorenz96_truncated_drift(const VecRef& x, double cap) {
  Vector out(x.size());
  lorenz96_truncated_drift(x, out, cap);
  return out;
}

double lipschitz_row_sum(const std::vector<double>& seq, std::size_t n, DistanceKind dist) {
  double best = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    double row = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t d =
          dist == DistanceKind::circular ? circ_distance(i, j, n) : (i > j ? i - j : j - i);
      if (d < seq.size()) row += seq[d];
    }
    best = std::max(best, row);
  }
  return best;
}

LipschitzMetadata lorenz96_lipschitz(double cap, std::size_t n) {
  if (!(cap >= 0.0)) throw std::invalid_argument("cap must be >= 0");
  LipschitzMetadata meta;
  // |x_s| at distance 0; x_{s+1} (C) and x_{s-1} (2C) at distance 1; x_{s-2} at distance 2.
  meta.seq = {1.0, 2.0 * cap, cap};
  meta.c_f = lipschitz_row_sum(meta.seq, n);
  return meta;
}

DriftModel DriftModel::lorenz96(std::size_t n, double forcing) {
  require_l96_size(static_cast<Eigen::Index>(n));
  // The untruncated drift has no global Lipschitz bound; report the cap-40 box values.
  auto meta = lorenz96_lipschitz(40.0, n);
  return DriftModel(
      n, [forcing](const VecRef& x, VecOut out) { lorenz96_drift(x, out, forcing); },
      std::move(meta.seq), DistanceKind::circular, "lorenz96");
}

DriftModel DriftModel::lorenz96_truncated(std::size_t n, double cap, double forcing) {
  require_l96_size(static_cast<Eigen::Index>(n));
  auto meta = lorenz96_lipschitz(cap, n);
  return DriftModel(
      n,
      [cap, forcing](const VecRef& x, VecOut out) {
        lorenz96_truncated_drift(x, out, cap);
        out.array() += forcing;
      },
      std::move(meta.seq), DistanceKind::circular, "lorenz96_truncated");
}

DriftModel DriftModel::linear(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("linear drift needs a square matrix");
  const std::size_t n = static_cast<std::size_t>(a.rows());
  std::vector<double> seq(n / 2 + 1, 0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t d = circ_distance(i, j, n);
      seq[d] = std::max(seq[d], std::abs(a(i - 1, j - 1)));
    }
  }
  return DriftModel(
      n, [a](const VecRef& x, VecOut out) { out.noalias() = a * x; }, std::move(seq),
      DistanceKind::circular, "linear");
}

DriftModel DriftModel::zero(std::size_t n) {
  return DriftModel(
      n, [](const VecRef&, VecOut out) { out.setZero(); }, {0.0}, DistanceKind::circular,
      "zero");
}

ObsNoiseSpec ObsNoiseSpec::isotropic(std::size_t n, double epsilon) {
  ObsNoiseSpec spec{epsilon, Vector::Ones(static_cast<Eigen::Index>(n))};
  spec.validate();
  return spec;
}

void ObsNoiseSpec::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (omega.size() == 0) throw std::invalid_argument("Omega must be non-empty");
  if (!(omega.minCoeff() > 0.0)) throw std::invalid_argument("Omega must be positive definite");
}

DominationReport verify_localization_domination(const LocalizationMatrix& phi,
                                                 const std::vector<double>& lipschitz_seq,
                                                 double c_f_candidate) {
  DominationReport rep;
  const auto stats = localization_stats(phi);
  rep.q = stats.q;
  rep.holds_dominance = stats.diag_dominant;

  const std::size_t n = phi.n();
  double minimal = 0.0;
  bool feasible = true;
  bool holds = true;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t d = circ_distance(i, j, n);
      const double f = d < lipschitz_seq.size() ? lipschitz_seq[d] : 0.0;
      if (f == 0.0) continue;
      const double p = phi(i - 1, j - 1);
      if (p == 0.0) {
        feasible = false;
        holds = false;
        continue;
      }
      minimal = std::max(minimal, f / p);
      if (f > c_f_candidate * p) holds = false;
    }
  }
  rep.holds_domination = holds;
  if (feasible) rep.minimal_c_f = minimal;
  return rep;
}

CanonicalSystem canonicalize(const Vector& sigma, const Matrix& h, const Matrix& r,
                             const DriftModel& f, double epsilon) {
  const Eigen::Index n = sigma.size();
  if (!(sigma.minCoeff() > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (h.rows() != n || h.cols() != n) {
    throw std::invalid_argument("canonicalize: H must be square with the state dimension");
  }
  if (r.rows() != n) throw std::invalid_argument("canonicalize: R row count mismatch");
  if (static_cast<std::size_t>(n) != f.n()) throw std::invalid_argument("canonicalize: drift dimension mismatch");

  Eigen::FullPivLU<Matrix> lu(h);
  if (!lu.isInvertible()) throw std::invalid_argument("canonicalize: observation operator H is singular");
  const Matrix h_inv = lu.inverse();

  const Vector sigma_inv = sigma.cwiseInverse();
  Matrix r_tilde = sigma_inv.asDiagonal() * (h_inv * r);

  const Matrix rrt = r_tilde * r_tilde.transpose();
  const double scale = std::max(1.0, rrt.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && std::abs(rrt(i, j)) > 1e-12 * scale) {
        throw std::invalid_argument("canonicalize: transformed noise covariance is not diagonal");
      }
    }
  }
  const Vector rrt_diag = rrt.diagonal();
  if (epsilon <= 0.0) epsilon = rrt_diag.maxCoeff();
  ObsNoiseSpec obs{epsilon, (epsilon * rrt_diag.cwiseInverse()).eval()};
  obs.validate();

  // f~(x) = sigma^{-1} f(sigma x)
  DriftFn base = [f](const VecRef& x, VecOut out) { f.eval(x, out); };
  DriftFn transformed = [base, sigma, sigma_inv](const VecRef& x, VecOut out) {
    const Vector scaled = sigma.cwiseProduct(x);
    base(scaled, out);
    out.array() *= sigma_inv.array();
  };
  // Lipschitz bounds rescale by sigma_i^{-1} sigma_j; keep a conservative per-distance max.
  std::vector<double> seq = f.lipschitz_seq();
  const double ratio = sigma.maxCoeff() / sigma.minCoeff();
  for (double& v : seq) v *= ratio;

  return CanonicalSystem{DriftModel(f.n(), std::move(transformed), std::move(seq), f.dist(),
                                    f.name() + "_canonical"),
                         std::move(r_tilde), std::move(obs), sigma};
}

}  // namespace enkbf
