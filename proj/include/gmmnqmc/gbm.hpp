#pragma once

// Marginal geometric Brownian motions: volatility estimation and innovation
// recovery ("deBrowning") from observed prices, and forward simulation of
// dependent price paths from a cube of N(0,1) increments.

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/stats.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gmmnqmc::gbm {

struct GbmModel {
  /// Risk-free rate per unit of time on the grid.
  double r = 0.0;
  /// Volatility per unit of time, one per margin.
  Vector sigma;
  /// Starting prices.
  Vector x0;
  /// Time grid t_0 < t_1 < ...; times are measured relative to the start.
  std::vector<double> grid;

  std::size_t dim() const { return static_cast<std::size_t>(sigma.size()); }
};

/// t_k = k * dt for k = 0..steps.
inline std::vector<double> uniform_grid(std::size_t steps, double dt = 1.0) {
  std::vector<double> g(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) g[k] = static_cast<double>(k) * dt;
  return g;
}

inline void check_grid(std::span<const double> grid) {
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1])) throw DomainError("time grid must be strictly increasing");
}

struct Estimate {
  /// Fitted model with x0 set to the last observed prices (the simulation origin)
  /// and a unit-spaced grid of length 1; callers set the simulation grid.
  GbmModel model;
  /// Recovered innovations, n_trn x d.
  Matrix innovations;
};

/// Estimate sigma as the sample standard deviation of log-returns and recover
/// the standard normal increments. `pinned_sigma` bypasses the estimate.
inline Estimate estimate(const Matrix& prices, double r, std::optional<std::vector<double>> grid = std::nullopt,
                         std::optional<Vector> pinned_sigma = std::nullopt) {
  const Eigen::Index rows = prices.rows(), d = prices.cols();
  if (rows < 3) throw DomainError("gbm::estimate: need at least 3 prices (n_trn >= 2)");
  for (Eigen::Index i = 0; i < prices.size(); ++i)
    if (!(prices.data()[i] > 0.0)) throw DomainError("gbm::estimate: prices must be positive");
  const std::vector<double> t = grid ? *grid : uniform_grid(static_cast<std::size_t>(rows - 1));
  if (static_cast<Eigen::Index>(t.size()) != rows) throw DimensionError("gbm::estimate: grid length must equal price rows");
  check_grid(t);
  if (pinned_sigma && pinned_sigma->size() != d) throw DimensionError("gbm::estimate: pinned sigma has wrong length");

  const Eigen::Index n = rows - 1;
  Estimate out;
  out.model.r = r;
  out.model.sigma.resize(d);
  out.model.x0 = prices.row(rows - 1).transpose();
  out.model.grid = uniform_grid(1);
  out.innovations.resize(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> lr(static_cast<std::size_t>(n));
    for (Eigen::Index k = 1; k <= n; ++k) lr[static_cast<std::size_t>(k - 1)] = std::log(prices(k, j) / prices(k - 1, j));
    double s;
    if (pinned_sigma) {
      s = (*pinned_sigma)(j);
    } else {
      s = stats::stddev(lr);
      const double scale = std::abs(stats::mean(lr)) + 1e-300;
      if (!(s > 1e-12 * scale) || s == 0.0)
        throw DegenerateMarginError("gbm::estimate: margin " + std::to_string(j) + " has zero log-return variance");
    }
    out.model.sigma(j) = s;
    const double drift = r - 0.5 * s * s;
    double w_prev = 0.0;  // W at t_0 is zero by construction
    const double log_x0 = std::log(prices(0, j));
    for (Eigen::Index k = 1; k <= n; ++k) {
      const auto tk = t[static_cast<std::size_t>(k)] - t[0];
      const double w = (std::log(prices(k, j)) - log_x0 - drift * tk) / s;
      out.innovations(k - 1, j) = (w - w_prev) / std::sqrt(t[static_cast<std::size_t>(k)] - t[static_cast<std::size_t>(k - 1)]);
      w_prev = w;
    }
  }
  return out;
}

/// Map a cube of uniforms to N(0,1) increments componentwise.
inline PathCube normal_increments(const PathCube& u) {
  PathCube z = u;
  for (double& v : z.values()) v = stats::normal_quantile(v);
  return z;
}

/// Price paths X_{t_k}, k = 1..n_gen, from innovations (n_pth x n_gen x d).
/// model.grid must hold t_0..t_{n_gen}. sigma = 0 is accepted (deterministic drift).
inline PathCube simulate(const GbmModel& model, const PathCube& z) {
  const std::size_t d = model.dim();
  if (z.dim() != d || static_cast<std::size_t>(model.x0.size()) != d)
    throw DimensionError("gbm::simulate: innovation dimension does not match the model");
  if (model.grid.size() != z.n_gen() + 1)
    throw DimensionError("gbm::simulate: grid must have n_gen + 1 points (t_0..t_n_gen)");
  check_grid(model.grid);
  for (Eigen::Index j = 0; j < model.sigma.size(); ++j)
    if (model.sigma(j) < 0.0) throw DomainError("gbm::simulate: negative volatility");
  for (Eigen::Index j = 0; j < model.x0.size(); ++j)
    if (!(model.x0(j) > 0.0)) throw DomainError("gbm::simulate: initial price must be positive");

  std::vector<double> sqrt_dt(z.n_gen());
  for (std::size_t k = 0; k < z.n_gen(); ++k) sqrt_dt[k] = std::sqrt(model.grid[k + 1] - model.grid[k]);
  PathCube x(z.n_pth(), z.n_gen(), d);
  for (std::size_t i = 0; i < z.n_pth(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double s = model.sigma(static_cast<Eigen::Index>(j));
      const double drift = model.r - 0.5 * s * s;
      const double x0 = model.x0(static_cast<Eigen::Index>(j));
      double w = 0.0;
      for (std::size_t k = 0; k < z.n_gen(); ++k) {
        w += sqrt_dt[k] * z(i, k, j);
        x(i, k, j) = x0 * std::exp(drift * (model.grid[k + 1] - model.grid[0]) + s * w);
      }
    }
  return x;
}

}  // namespace gmmnqmc::gbm
