#pragma once

// Parametric copula baselines: independence, Clayton, normal and t. Sampling
// is a deterministic transform of a uniform matrix, so pseudo-random input
// gives pseudo-random copula samples and RQMC input gives quasi-random ones.

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/detail/optim.hpp"
#include "gmmnqmc/qmc.hpp"
#include "gmmnqmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gmmnqmc::copulas {

enum class Family { Independence, Clayton, Normal, StudentT };

struct Independence {
  std::size_t dim = 2;
};

struct Clayton {
  std::size_t dim = 2;
  double theta = 1.0;
};

struct Normal {
  Matrix P;
};

struct StudentT {
  Matrix P;
  double nu = 4.0;
};

using CopulaSpec = std::variant<Independence, Clayton, Normal, StudentT>;

inline constexpr double kThetaMin = 1e-4;
inline constexpr double kThetaMax = 50.0;
inline constexpr double kNuMin = 2.01;
inline constexpr double kNuMax = 1e6;

inline Family family(const CopulaSpec& s) { return static_cast<Family>(s.index()); }

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Independence: return "independence";
    case Family::Clayton: return "clayton";
    case Family::Normal: return "normal";
    case Family::StudentT: return "t";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "independence") return Family::Independence;
  if (s == "clayton") return Family::Clayton;
  if (s == "normal") return Family::Normal;
  if (s == "t") return Family::StudentT;
  throw Error("unknown copula family: " + s);
}

inline std::size_t dim(const CopulaSpec& s) {
  return std::visit(
      [](const auto& c) -> std::size_t {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Independence> || std::is_same_v<T, Clayton>)
          return c.dim;
        else
          return static_cast<std::size_t>(c.P.rows());
      },
      s);
}

/// Number of uniform coordinates consumed per sample (t uses one extra for the mixing variable).
inline std::size_t uniform_width(const CopulaSpec& s) {
  return dim(s) + (family(s) == Family::StudentT ? 1 : 0);
}

/// Equicorrelation matrix with off-diagonal rho.
inline Matrix equicorrelation(std::size_t d, double rho) {
  Matrix p = Matrix::Constant(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d), rho);
  p.diagonal().setOnes();
  return p;
}

inline void validate_correlation(const Matrix& p) {
  if (p.rows() != p.cols() || p.rows() < 1) throw DimensionError("correlation matrix must be square");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    if (std::abs(p(i, i) - 1.0) > 1e-10) throw DomainError("correlation matrix must have unit diagonal");
    for (Eigen::Index j = 0; j < i; ++j)
      if (std::abs(p(i, j) - p(j, i)) > 1e-10) throw DomainError("correlation matrix must be symmetric");
  }
  Eigen::LLT<Matrix> llt(p);
  if (llt.info() != Eigen::Success) throw DomainError("correlation matrix must be positive definite");
}

inline void validate(const CopulaSpec& s) {
  std::visit(
      [](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Independence>) {
          if (c.dim < 1) throw DomainError("independence copula needs dim >= 1");
        } else if constexpr (std::is_same_v<T, Clayton>) {
          if (c.dim < 2) throw DomainError("Clayton copula needs dim >= 2");
          if (!(c.theta > 0.0)) throw DomainError("Clayton theta must be positive");
        } else if constexpr (std::is_same_v<T, Normal>) {
          validate_correlation(c.P);
        } else {
          validate_correlation(c.P);
          if (!(c.nu > 2.0)) throw DomainError("t copula requires nu > 2");
        }
      },
      s);
}

/// Nearest correlation matrix by eigenvalue clipping followed by diagonal rescaling.
inline Matrix nearest_correlation(const Matrix& a, double floor = 1e-6) {
  const Matrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector ev = es.eigenvalues().cwiseMax(floor);
  Matrix b = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  const Vector s = b.diagonal().cwiseSqrt().cwiseInverse();
  b = s.asDiagonal() * b * s.asDiagonal();
  b = 0.5 * (b + b.transpose());
  b.diagonal().setOnes();
  return b;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace detail_sample {

inline Matrix correlate_normals(const Matrix& u, const Matrix& p) {
  const Eigen::Index d = p.rows();
  Matrix x(u.rows(), d);
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = stats::normal_quantile(u(i, j));
  const Eigen::LLT<Matrix> llt(p);
  const Matrix l = llt.matrixL();
  return x * l.transpose();
}

}  // namespace detail_sample

/// Copula sample from a uniform matrix (n x uniform_width(spec)).
inline Matrix sample(const CopulaSpec& spec, const Matrix& u) {
  validate(spec);
  const auto d = static_cast<Eigen::Index>(dim(spec));
  if (u.cols() != static_cast<Eigen::Index>(uniform_width(spec)))
    throw DimensionError("copula sample: expected " + std::to_string(uniform_width(spec)) +
                         " uniform columns, got " + std::to_string(u.cols()));
  return std::visit(
      [&](const auto& c) -> Matrix {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Independence>) {
          return u;
        } else if constexpr (std::is_same_v<T, Clayton>) {
          // Conditional distribution method: closed-form inverse of C(u_k | u_1..u_{k-1}).
          Matrix out(u.rows(), d);
          const double th = c.theta;
          for (Eigen::Index i = 0; i < u.rows(); ++i) {
            double s = 0.0;  // sum_{j<k} (u_j^{-theta} - 1)
            for (Eigen::Index k = 0; k < d; ++k) {
              const double w = u(i, k);
              const double expo = -th / (1.0 + static_cast<double>(k) * th);
              const double a = 1.0 + (1.0 + s) * std::expm1(expo * std::log(w));
              const double uk = qmc::clamp_unit(std::exp(-std::log(a) / th));
              out(i, k) = uk;
              s += std::expm1(-th * std::log(uk));
            }
          }
          return out;
        } else if constexpr (std::is_same_v<T, Normal>) {
          Matrix y = detail_sample::correlate_normals(u, c.P);
          for (Eigen::Index i = 0; i < y.rows(); ++i)
            for (Eigen::Index j = 0; j < d; ++j) y(i, j) = qmc::clamp_unit(stats::normal_cdf(y(i, j)));
          return y;
        } else {
          Matrix y = detail_sample::correlate_normals(u.leftCols(d), c.P);
          for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const double w = stats::chi_square_quantile(u(i, d), c.nu);
            const double scale = 1.0 / std::sqrt(w / c.nu);
            for (Eigen::Index j = 0; j < d; ++j)
              y(i, j) = qmc::clamp_unit(stats::student_t_cdf(y(i, j) * scale, c.nu));
          }
          return y;
        }
      },
      spec);
}

// ---------------------------------------------------------------------------
// Densities
// ---------------------------------------------------------------------------

namespace detail_density {

/// log(sum_j u_j^{-theta} - d + 1) without overflow.
inline double clayton_log_generator_sum(std::span<const double> log_u, double theta) {
  double m = 0.0;
  for (double lu : log_u) m = std::max(m, -theta * lu);
  double s = 0.0;
  for (double lu : log_u) s += std::exp(-theta * lu - m);
  s -= static_cast<double>(log_u.size() - 1) * std::exp(-m);
  return m + std::log(s);
}

inline double clayton_log_density(std::span<const double> log_u, double theta) {
  const auto d = log_u.size();
  double v = 0.0, slog = 0.0;
  for (std::size_t k = 0; k < d; ++k) v += std::log1p(static_cast<double>(k) * theta);
  for (double lu : log_u) slog += lu;
  return v - (1.0 + theta) * slog - (static_cast<double>(d) + 1.0 / theta) * clayton_log_generator_sum(log_u, theta);
}

inline double t_log_constant(double nu, std::size_t d) {
  const double dd = static_cast<double>(d);
  return std::lgamma(0.5 * (nu + dd)) + (dd - 1.0) * std::lgamma(0.5 * nu) - dd * std::lgamma(0.5 * (nu + 1.0));
}

}  // namespace detail_density

inline double log_density(const CopulaSpec& spec, std::span<const double> u) {
  if (u.size() != dim(spec)) throw DimensionError("log_density: argument dimension mismatch");
  for (double v : u)
    if (!(v > 0.0 && v < 1.0)) throw DomainError("log_density: argument must lie strictly inside the unit cube");
  return std::visit(
      [&](const auto& c) -> double {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Independence>) {
          return 0.0;
        } else if constexpr (std::is_same_v<T, Clayton>) {
          std::vector<double> lu(u.size());
          for (std::size_t j = 0; j < u.size(); ++j) lu[j] = std::log(u[j]);
          return detail_density::clayton_log_density(lu, c.theta);
        } else if constexpr (std::is_same_v<T, Normal>) {
          const Eigen::LLT<Matrix> llt(c.P);
          Vector x(static_cast<Eigen::Index>(u.size()));
          for (std::size_t j = 0; j < u.size(); ++j) x(static_cast<Eigen::Index>(j)) = stats::normal_quantile(u[j]);
          const Vector y = llt.matrixL().solve(x);
          const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
          return -0.5 * logdet - 0.5 * (y.squaredNorm() - x.squaredNorm());
        } else {
          const Eigen::LLT<Matrix> llt(c.P);
          Vector x(static_cast<Eigen::Index>(u.size()));
          double marg = 0.0;
          for (std::size_t j = 0; j < u.size(); ++j) {
            const double xj = stats::student_t_quantile(u[j], c.nu);
            x(static_cast<Eigen::Index>(j)) = xj;
            marg += std::log1p(xj * xj / c.nu);
          }
          const Vector y = llt.matrixL().solve(x);
          const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
          const double dd = static_cast<double>(u.size());
          return detail_density::t_log_constant(c.nu, u.size()) - 0.5 * logdet -
                 0.5 * (c.nu + dd) * std::log1p(y.squaredNorm() / c.nu) + 0.5 * (c.nu + 1.0) * marg;
        }
      },
      spec);
}

inline double log_likelihood(const CopulaSpec& spec, const Matrix& u) {
  double s = 0.0;
  std::vector<double> row(static_cast<std::size_t>(u.cols()));
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    for (Eigen::Index j = 0; j < u.cols(); ++j) row[static_cast<std::size_t>(j)] = u(i, j);
    s += log_density(spec, row);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Maximum pseudo-likelihood fitting
// ---------------------------------------------------------------------------

struct FitOptions {
  std::vector<double> nu_grid{2.5, 3, 4, 5, 6, 8, 10, 15, 20, 30};
  std::size_t max_sweeps = 100;
  double sweep_tol = 1e-6;
};

namespace detail_fit {

inline constexpr double kPenalty = 1e300;

/// Elliptical pseudo-log-likelihood as a function of P for fixed scores X
/// (normal scores, or t_nu quantiles). Only the P-dependent part is returned.
class EllipticalObjective {
 public:
  EllipticalObjective(const Matrix& x, double nu) : x_(x), nu_(nu), scatter_(x.transpose() * x) {}

  double operator()(const Matrix& p) const {
    const Eigen::LLT<Matrix> llt(p);
    if (llt.info() != Eigen::Success) return -kPenalty;
    const Matrix l = llt.matrixL();
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    const double n = static_cast<double>(x_.rows());
    if (!std::isfinite(logdet)) return -kPenalty;
    if (nu_ <= 0.0) {
      // Normal: -n/2 log|P| - 1/2 tr(P^{-1} S) (the +1/2 tr(S) term does not depend on P).
      const Matrix pinv_s = llt.solve(scatter_);
      return -0.5 * n * logdet - 0.5 * pinv_s.trace();
    }
    const Matrix y = l.triangularView<Eigen::Lower>().solve(x_.transpose());
    const double dd = static_cast<double>(p.rows());
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.cols(); ++i) s += std::log1p(y.col(i).squaredNorm() / nu_);
    return -0.5 * n * logdet - 0.5 * (nu_ + dd) * s;
  }

 private:
  const Matrix& x_;
  double nu_;  // <= 0 selects the normal copula
  Matrix scatter_;
};

/// Coordinate ascent over the off-diagonal entries of P; each entry is
/// maximized by Brent on (-1, 1) with a penalty outside the PD region.
template <class Objective>
Matrix coordinate_ascent(const Objective& obj, Matrix p, const FitOptions& opt) {
  const Eigen::Index d = p.rows();
  double current = obj(p);
  for (std::size_t sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < a; ++b) {
        const double old = p(a, b);
        auto f = [&](double r) {
          Matrix q = p;
          q(a, b) = q(b, a) = r;
          return -obj(q);
        };
        const auto m = detail::brent_minimize(f, -0.9999, 0.9999, 40);
        if (-m.value > current) {
          p(a, b) = p(b, a) = m.x;
          current = -m.value;
          max_change = std::max(max_change, std::abs(m.x - old));
        }
      }
    if (max_change < opt.sweep_tol) return p;
  }
  std::vector<double> best(p.data(), p.data() + p.size());
  throw ConvergenceError("coordinate ascent on the correlation matrix did not converge", std::move(best), current);
}

inline Matrix scores(const Matrix& u, double nu) {
  Matrix x(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i)
    for (Eigen::Index j = 0; j < u.cols(); ++j)
      x(i, j) = nu <= 0.0 ? stats::normal_quantile(u(i, j)) : stats::student_t_quantile(u(i, j), nu);
  return x;
}

/// Full t pseudo-log-likelihood for fixed P, including the nu-dependent terms.
inline double t_log_likelihood(const Matrix& u, const Matrix& p, double nu) {
  const Matrix x = scores(u, nu);
  const EllipticalObjective obj(x, nu);
  double marg = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) marg += std::log1p(x.data()[i] * x.data()[i] / nu);
  return static_cast<double>(u.rows()) * detail_density::t_log_constant(nu, static_cast<std::size_t>(u.cols())) + obj(p) +
         0.5 * (nu + 1.0) * marg;
}

inline Matrix tau_correlation(const Matrix& u) {
  const Eigen::Index d = u.cols();
  Matrix p = Matrix::Identity(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < a; ++b)
      p(a, b) = p(b, a) = std::sin(0.5 * std::numbers::pi * stats::kendall_tau(u, a, b));
  return nearest_correlation(p);
}

inline double clayton_log_likelihood(const Matrix& log_u, double theta) {
  double s = 0.0;
  std::vector<double> row(static_cast<std::size_t>(log_u.cols()));
  for (Eigen::Index i = 0; i < log_u.rows(); ++i) {
    for (Eigen::Index j = 0; j < log_u.cols(); ++j) row[static_cast<std::size_t>(j)] = log_u(i, j);
    s += detail_density::clayton_log_density(row, theta);
  }
  return s;
}

}  // namespace detail_fit

/// Maximum pseudo-likelihood fit of the given family to pseudo-observations u.
inline CopulaSpec fit_mpl(Family fam, const Matrix& u, const FitOptions& opt = {}) {
  const auto d = static_cast<std::size_t>(u.cols());
  if (d < 1) throw DimensionError("fit_mpl: empty dimension");
  if (static_cast<std::size_t>(u.rows()) < 10 * d) throw DomainError("fit_mpl: need at least 10*d observations");
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (!(u.data()[i] > 0.0 && u.data()[i] < 1.0)) throw DomainError("fit_mpl: observations must lie in (0,1)");

  switch (fam) {
    case Family::Independence:
      return Independence{d};

    case Family::Clayton: {
      if (d < 2) throw DomainError("Clayton fit needs d >= 2");
      double tau = 0.0;
      std::size_t pairs = 0;
      for (Eigen::Index a = 0; a < u.cols(); ++a)
        for (Eigen::Index b = 0; b < a; ++b, ++pairs) tau += stats::kendall_tau(u, a, b);
      tau = std::clamp(tau / static_cast<double>(pairs), 0.01, 0.95);
      const double theta0 = std::clamp(2.0 * tau / (1.0 - tau), kThetaMin, kThetaMax);
      const Matrix log_u = u.array().log().matrix();
      auto nll = [&](double log_theta) { return -detail_fit::clayton_log_likelihood(log_u, std::exp(log_theta)); };
      const double lo = std::log(kThetaMin), hi = std::log(kThetaMax);
      double blo = std::max(lo, std::log(theta0 / 5.0)), bhi = std::min(hi, std::log(theta0 * 5.0));
      auto m = detail::brent_minimize(nll, blo, bhi, 40);
      const double edge = 1e-3 * (bhi - blo);
      if ((m.x - blo < edge && blo > lo) || (bhi - m.x < edge && bhi < hi)) m = detail::brent_minimize(nll, lo, hi, 40);
      return Clayton{d, std::exp(m.x)};
    }

    case Family::Normal: {
      const Matrix x = detail_fit::scores(u, 0.0);
      Matrix p0 = x.transpose() * x;
      const Vector s = p0.diagonal().cwiseSqrt().cwiseInverse();
      p0 = nearest_correlation(s.asDiagonal() * p0 * s.asDiagonal());
      const detail_fit::EllipticalObjective obj(x, 0.0);
      return Normal{nearest_correlation(detail_fit::coordinate_ascent(obj, p0, opt))};
    }

    case Family::StudentT: {
      const Matrix p_tau = detail_fit::tau_correlation(u);
      double best_ll = -std::numeric_limits<double>::infinity();
      std::size_t best_idx = 0;
      Matrix best_p = p_tau;
      for (std::size_t g = 0; g < opt.nu_grid.size(); ++g) {
        const double nu = opt.nu_grid[g];
        const Matrix x = detail_fit::scores(u, nu);
        const detail_fit::EllipticalObjective obj(x, nu);
        const Matrix p = nearest_correlation(detail_fit::coordinate_ascent(obj, p_tau, opt));
        const double ll = detail_fit::t_log_likelihood(u, p, nu);
        if (ll > best_ll) {  // strict: lowest nu wins ties
          best_ll = ll;
          best_idx = g;
          best_p = p;
        }
      }
      const double lo = best_idx > 0 ? opt.nu_grid[best_idx - 1] : kNuMin;
      const double hi = best_idx + 1 < opt.nu_grid.size() ? opt.nu_grid[best_idx + 1] : kNuMax;
      auto nll = [&](double log_nu) { return -detail_fit::t_log_likelihood(u, best_p, std::exp(log_nu)); };
      const auto m = detail::brent_minimize(nll, std::log(lo), std::log(hi), 30);
      double nu = opt.nu_grid[best_idx];
      if (-m.value > best_ll) nu = std::exp(m.x);
      const Matrix x = detail_fit::scores(u, nu);
      const detail_fit::EllipticalObjective obj(x, nu);
      const Matrix p = nearest_correlation(detail_fit::coordinate_ascent(obj, best_p, opt));
      return StudentT{p, nu};
    }
  }
  throw Error("fit_mpl: unknown family");
}

}  // namespace gmmnqmc::copulas
