#pragma once

// ARMA(1,1)-GARCH(1,1) margins with unit-variance t innovations:
//   X_k = mu_k + sigma_k Z_k
//   mu_k = mu + phi (X_{k-1} - mu) + gamma (X_{k-1} - mu_{k-1})
//   sigma_k^2 = omega + alpha (X_{k-1} - mu_{k-1})^2 + beta sigma_{k-1}^2

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/detail/optim.hpp"
#include "gmmnqmc/detail/parallel.hpp"
#include "gmmnqmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace gmmnqmc::garch {

struct MarginParams {
  double mu = 0.0;
  double phi = 0.0;
  double gamma = 0.0;
  double omega = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  double nu = 8.0;
};

/// Last observation with its conditional mean and variance.
struct MarginState {
  double x = 0.0;
  double mu = 0.0;
  double sigma2 = 1.0;
  friend bool operator==(const MarginState&, const MarginState&) = default;
};

struct ArmaGarchModel {
  std::vector<MarginParams> margins;
  std::vector<MarginState> state;
  std::size_t dim() const { return margins.size(); }
};

/// Empirical predictive distribution of X at origin + h.
struct Epd {
  std::size_t h = 1;
  Matrix draws;
  std::size_t origin = 0;
};

/// Causal, invertible and covariance stationary, with finite innovation variance.
inline bool is_stationary(const MarginParams& p) {
  return p.omega > 0.0 && p.alpha >= 0.0 && p.beta >= 0.0 && p.alpha + p.beta < 1.0 && std::abs(p.phi) < 1.0 &&
         std::abs(p.gamma) < 1.0 && p.nu > 2.0;
}

/// is_stationary plus phi + gamma != 0, so the ARMA part has no common root.
/// Enforced on fitted models; iid location-scale models (phi = gamma = 0) are
/// still valid for filtering and simulation.
inline bool is_admissible_fit(const MarginParams& p) { return is_stationary(p) && p.phi + p.gamma != 0.0; }

inline void validate(const ArmaGarchModel& m) {
  if (m.margins.empty()) throw DomainError("ArmaGarchModel: no margins");
  if (m.state.size() != m.margins.size()) throw DimensionError("ArmaGarchModel: state size does not match margins");
  for (std::size_t j = 0; j < m.dim(); ++j) {
    if (!is_stationary(m.margins[j])) throw DomainError("ArmaGarchModel: margin " + std::to_string(j) + " violates the stationarity constraints");
    if (!(m.state[j].sigma2 > 0.0)) throw DomainError("ArmaGarchModel: nonpositive conditional variance in state");
  }
}

/// Conditional mean and variance of the next observation.
inline MarginState next_moments(const MarginParams& p, const MarginState& s) {
  const double eps = s.x - s.mu;
  return {0.0, p.mu + p.phi * (s.x - p.mu) + p.gamma * eps, p.omega + p.alpha * eps * eps + p.beta * s.sigma2};
}

/// Pre-sample state used to start the recursion: X = mu = sample mean, sigma^2 = sample variance.
inline MarginState presample_state(std::span<const double> x) {
  const double m = stats::mean(x);
  return {m, m, stats::variance(x)};
}

struct MarginPath {
  std::vector<double> mu, sigma2, z;
  MarginState terminal;
};

/// Runs the recursions over x from state s0 and standardizes each observation.
inline MarginPath filter_margin(const MarginParams& p, const MarginState& s0, std::span<const double> x) {
  MarginPath out;
  out.mu.resize(x.size());
  out.sigma2.resize(x.size());
  out.z.resize(x.size());
  MarginState s = s0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const MarginState nm = next_moments(p, s);
    out.mu[k] = nm.mu;
    out.sigma2[k] = nm.sigma2;
    out.z[k] = (x[k] - nm.mu) / std::sqrt(nm.sigma2);
    s = {x[k], nm.mu, nm.sigma2};
  }
  out.terminal = s;
  return out;
}

/// Advances the terminal state over new observations; parameters are untouched.
inline std::vector<MarginState> filter(const ArmaGarchModel& m, const Matrix& returns) {
  if (returns.rows() > 0 && static_cast<std::size_t>(returns.cols()) != m.dim())
    throw DimensionError("garch::filter: column count does not match the model");
  std::vector<MarginState> st = m.state;
  for (std::size_t j = 0; j < m.dim(); ++j)
    for (Eigen::Index k = 0; k < returns.rows(); ++k) {
      const MarginState nm = next_moments(m.margins[j], st[j]);
      st[j] = {returns(k, static_cast<Eigen::Index>(j)), nm.mu, nm.sigma2};
    }
  return st;
}

/// Series driven by given standardized innovations z (n x d) from per-margin start states.
inline Matrix simulate(const std::vector<MarginParams>& params, const std::vector<MarginState>& s0, const Matrix& z) {
  if (static_cast<std::size_t>(z.cols()) != params.size() || s0.size() != params.size())
    throw DimensionError("garch::simulate: dimension mismatch");
  Matrix x(z.rows(), z.cols());
  for (std::size_t j = 0; j < params.size(); ++j) {
    MarginState s = s0[j];
    for (Eigen::Index k = 0; k < z.rows(); ++k) {
      const MarginState nm = next_moments(params[j], s);
      const double v = nm.mu + std::sqrt(nm.sigma2) * z(k, static_cast<Eigen::Index>(j));
      x(k, static_cast<Eigen::Index>(j)) = v;
      s = {v, nm.mu, nm.sigma2};
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

struct FitOptions {
  /// Leading residuals dropped from the uniforms.
  std::size_t burn_in = 10;
  /// Pseudo-observations of the residuals instead of the fitted t CDF.
  bool rank_uniforms = false;
  std::size_t max_evals = 6000;
  std::size_t restarts = 3;
};

struct FitResult {
  ArmaGarchModel model;
  /// Standardized residuals, n_trn x d.
  Matrix residuals;
  /// Residual uniforms after the burn-in, (n_trn - burn_in) x d.
  Matrix uniforms;
  Matrix mu, sigma2;
  std::vector<double> log_likelihood;
  std::vector<std::string> warnings;
};

namespace detail {

inline constexpr double kMaxLogNu = 12.0;
inline constexpr double kMaxAtanh = 7.0;

/// Unconstrained vector <-> parameters: mu, atanh phi, atanh gamma, log omega,
/// logit(alpha + beta), logit(alpha / (alpha + beta)), log(nu - 2).
inline MarginParams decode(const std::vector<double>& t) {
  MarginParams p;
  p.mu = t[0];
  p.phi = std::tanh(std::clamp(t[1], -kMaxAtanh, kMaxAtanh));
  p.gamma = std::tanh(std::clamp(t[2], -kMaxAtanh, kMaxAtanh));
  p.omega = std::exp(t[3]);
  const double pers = gmmnqmc::detail::logistic(t[4]);
  const double share = gmmnqmc::detail::logistic(t[5]);
  p.alpha = pers * share;
  p.beta = pers * (1.0 - share);
  p.nu = 2.0 + std::exp(std::min(t[6], kMaxLogNu));
  return p;
}

inline std::vector<double> encode(const MarginParams& p) {
  const double pers = p.alpha + p.beta;
  return {p.mu,
          std::atanh(p.phi),
          std::atanh(p.gamma),
          std::log(p.omega),
          gmmnqmc::detail::logit(pers),
          gmmnqmc::detail::logit(p.alpha / pers),
          std::log(p.nu - 2.0)};
}

/// Negative scaled-t log-likelihood of x given the recursion started at s0.
inline double negative_log_likelihood(const MarginParams& p, const MarginState& s0, std::span<const double> x) {
  const double nu = p.nu;
  const double c = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(std::numbers::pi * (nu - 2.0));
  MarginState s = s0;
  double nll = 0.0;
  for (double xk : x) {
    const MarginState nm = next_moments(p, s);
    if (!(nm.sigma2 > 0.0) || !std::isfinite(nm.sigma2)) return std::numeric_limits<double>::infinity();
    const double e = xk - nm.mu;
    nll -= c - 0.5 * std::log(nm.sigma2) - 0.5 * (nu + 1.0) * std::log1p(e * e / (nm.sigma2 * (nu - 2.0)));
    s = {xk, nm.mu, nm.sigma2};
  }
  return nll;
}

}  // namespace detail

inline MarginParams start_values(std::span<const double> x) {
  MarginParams p;
  p.mu = stats::mean(x);
  p.phi = 0.1;
  p.gamma = 0.05;
  p.alpha = 0.05;
  p.beta = 0.85;
  p.omega = stats::variance(x) * (1.0 - p.alpha - p.beta);
  p.nu = 8.0;
  return p;
}

/// QML fit of one margin. Throws ConvergenceError if the simplex never settles.
inline MarginParams fit_margin(std::span<const double> x, const FitOptions& opt, std::vector<std::string>* warnings = nullptr) {
  const MarginState s0 = presample_state(x);
  if (!(s0.sigma2 > 0.0)) throw DegenerateMarginError("garch::fit: margin has zero variance");
  auto objective = [&](const std::vector<double>& t) { return detail::negative_log_likelihood(detail::decode(t), s0, x); };
  auto res = gmmnqmc::detail::nelder_mead(objective, detail::encode(start_values(x)), 0.3, 1e-11, opt.max_evals);
  for (std::size_t r = 0; r < opt.restarts; ++r) {
    const double prev = res.value;
    auto next = gmmnqmc::detail::nelder_mead(objective, res.x, 0.1, 1e-11, opt.max_evals);
    if (next.value <= res.value) res = next;
    if (res.converged && std::abs(prev - res.value) <= 1e-9 * (std::abs(res.value) + 1.0)) break;
  }
  if (!res.converged || !std::isfinite(res.value))
    throw ConvergenceError("garch::fit: Nelder-Mead did not converge", res.x, res.value);
  MarginParams p = detail::decode(res.x);
  if (!(p.alpha + p.beta < 1.0)) {
    p.beta = std::nextafter(1.0 - p.alpha, 0.0);
    if (warnings) warnings->push_back("projected alpha + beta into the stationary region");
  }
  if (p.phi + p.gamma == 0.0) {
    p.gamma = std::nextafter(p.gamma, 1.0);
    if (warnings) warnings->push_back("nudged gamma so that phi + gamma != 0");
  }
  if (!(p.omega > 0.0)) {
    p.omega = std::numeric_limits<double>::min();
    if (warnings) warnings->push_back("projected omega to a positive value");
  }
  return p;
}

/// Fits every margin, standardizes the residuals and maps them to uniforms.
inline FitResult fit(const Matrix& returns, const FitOptions& opt = {}) {
  const auto n = static_cast<std::size_t>(returns.rows());
  const auto d = static_cast<std::size_t>(returns.cols());
  if (n < 250) throw DomainError("garch::fit: need at least 250 observations per margin");
  if (d == 0) throw DimensionError("garch::fit: no margins");
  if (opt.burn_in + 2 > n) throw DomainError("garch::fit: burn-in leaves no residuals");

  FitResult out;
  out.model.margins.resize(d);
  out.model.state.resize(d);
  out.residuals.resize(returns.rows(), returns.cols());
  out.mu.resize(returns.rows(), returns.cols());
  out.sigma2.resize(returns.rows(), returns.cols());
  out.log_likelihood.resize(d);
  std::vector<std::vector<double>> cols(d);
  std::vector<std::vector<std::string>> warn(d);
  for (std::size_t j = 0; j < d; ++j) cols[j] = stats::column(returns, static_cast<Eigen::Index>(j));

  gmmnqmc::detail::parallel_for(d, [&](std::size_t j) { out.model.margins[j] = fit_margin(cols[j], opt, &warn[j]); }, 1);

  for (std::size_t j = 0; j < d; ++j) {
    const auto& p = out.model.margins[j];
    const MarginState s0 = presample_state(cols[j]);
    const MarginPath path = filter_margin(p, s0, cols[j]);
    for (std::size_t k = 0; k < n; ++k) {
      const auto kk = static_cast<Eigen::Index>(k), jj = static_cast<Eigen::Index>(j);
      out.mu(kk, jj) = path.mu[k];
      out.sigma2(kk, jj) = path.sigma2[k];
      out.residuals(kk, jj) = path.z[k];
    }
    out.model.state[j] = path.terminal;
    out.log_likelihood[j] = -detail::negative_log_likelihood(p, s0, cols[j]);
    for (auto& w : warn[j]) out.warnings.push_back("margin " + std::to_string(j) + ": " + w);
    if (!is_admissible_fit(p)) throw DomainError("garch::fit: fitted parameters violate the stationarity constraints");
  }

  const Matrix kept = out.residuals.bottomRows(static_cast<Eigen::Index>(n - opt.burn_in));
  if (opt.rank_uniforms) {
    out.uniforms = stats::pseudo_observations(kept);
  } else {
    out.uniforms.resize(kept.rows(), kept.cols());
    for (Eigen::Index j = 0; j < kept.cols(); ++j) {
      const double nu = out.model.margins[static_cast<std::size_t>(j)].nu;
      for (Eigen::Index k = 0; k < kept.rows(); ++k)
        out.uniforms(k, j) = std::clamp(stats::scaled_t_cdf(kept(k, j), nu), 0x1p-53, 1.0 - 0x1p-53);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forecasting
// ---------------------------------------------------------------------------

/// Forward simulation from a shared terminal state. Holds one tabulated
/// scaled-t quantile per margin so repeated calls avoid the exact inversion.
class Forecaster {
 public:
  explicit Forecaster(const ArmaGarchModel& m) : margins_(m.margins) {
    validate(m);
    for (const auto& p : margins_) quantiles_.emplace_back(p.nu);
  }

  std::size_t dim() const { return margins_.size(); }

  /// EPDs for horizons 1..h from uniforms shaped n_pth x h x d, mapped through
  /// each margin's scaled-t quantile.
  std::vector<Epd> operator()(const std::vector<MarginState>& state, const PathCube& u, std::size_t h,
                              std::size_t origin = 0) const {
    if (h == 0) throw DomainError("garch::forecast: horizon must be >= 1");
    if (state.size() != dim()) throw DimensionError("garch::forecast: state size does not match the model");
    if (u.n_gen() != h || u.dim() != dim() || u.n_pth() == 0)
      throw DimensionError("garch::forecast: uniforms must be n_pth x h x d");
    const std::size_t n = u.n_pth(), d = dim();
    std::vector<Epd> out(h);
    for (std::size_t s = 0; s < h; ++s) out[s] = {s + 1, Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d)), origin};

    gmmnqmc::detail::parallel_for(n, [&](std::size_t i) {
      for (std::size_t j = 0; j < d; ++j) {
        const auto& p = margins_[j];
        MarginState st = state[j];
        for (std::size_t s = 0; s < h; ++s) {
          const MarginState nm = next_moments(p, st);
          const double x = nm.mu + std::sqrt(nm.sigma2) * quantiles_[j](u(i, s, j));
          out[s].draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x;
          st = {x, nm.mu, nm.sigma2};
        }
      }
    }, 256);
    return out;
  }

 private:
  std::vector<MarginParams> margins_;
  std::vector<stats::ScaledTQuantile> quantiles_;
};

inline std::vector<Epd> forecast(const ArmaGarchModel& m, const PathCube& u, std::size_t h, std::size_t origin = 0) {
  return Forecaster(m)(m.state, u, h, origin);
}

}  // namespace gmmnqmc::garch
