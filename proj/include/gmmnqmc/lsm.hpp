#pragma once

// Least-squares Monte Carlo pricing of American basket calls on simulated
// price paths, regressing discounted continuation values on weighted
// Laguerre polynomials of the basket price.

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/stats.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace gmmnqmc::lsm {

struct OptionSpec {
  double strike = 0.0;
  /// Risk-free rate per unit of time on the grid.
  double rate = 0.0;
  /// t_0, t_1, ..., t_{n_gen}; exercise is possible at t_1..t_{n_gen} = T.
  std::vector<double> grid;
  /// Basket values are divided by this before the basis is evaluated. Pass
  /// the initial basket value to keep e^{-x/2} away from underflow; 1 gives
  /// the unscaled polynomials.
  double basis_scale = 1.0;
  /// Restrict the regression to in-the-money paths.
  bool itm_only = false;
};

struct PriceEstimate {
  double price = 0.0;
  double std_error = 0.0;
  std::size_t n_pth = 0;
};

inline double payoff(std::span<const double> x, double strike) {
  const double basket = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  return std::max(basket - strike, 0.0);
}

/// (1, L0, L1, L2, L0 L1, L0 L2, L1 L2) with
/// L0 = e^{-x/2}, L1 = e^{-x/2}(1 - x^2/2), L2 = e^{-x/2}(1 - 2x + x^2/2).
inline std::array<double, 7> laguerre_basis(double x) {
  const double e = std::exp(-0.5 * x);
  const double l0 = e;
  const double l1 = e * (1.0 - 0.5 * x * x);
  const double l2 = e * (1.0 - 2.0 * x + 0.5 * x * x);
  return {1.0, l0, l1, l2, l0 * l1, l0 * l2, l1 * l2};
}

/// 101% of the basket of last observed prices, rounded to the nearest integer when `round`.
inline double strike_from_basket(std::span<const double> last_prices, bool round = true) {
  for (double p : last_prices)
    if (!(p > 0.0)) throw DomainError("strike_from_basket: prices must be positive");
  const double k = 1.01 * std::accumulate(last_prices.begin(), last_prices.end(), 0.0) / static_cast<double>(last_prices.size());
  return round ? std::round(k) : k;
}

namespace detail {

/// Fitted values of the least-squares regression of y on the columns of D.
/// Householder QR; when the design is numerically rank deficient
/// (sigma_min < 1e-10 sigma_max) a truncated-SVD pseudo-inverse is used.
inline Vector least_squares_fit(const Matrix& design, const Vector& y) {
  const Eigen::HouseholderQR<Matrix> qr(design);
  const Eigen::Index p = design.cols();
  const Matrix r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  const Vector qty = (qr.householderQ().transpose() * y).head(p);
  const Eigen::JacobiSVD<Matrix> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  Vector beta;
  if (sv(0) > 0.0 && sv(p - 1) >= 1e-10 * sv(0)) {
    beta = r.triangularView<Eigen::Upper>().solve(qty);
  } else {
    Vector inv = Vector::Zero(p);
    for (Eigen::Index i = 0; i < p; ++i)
      if (sv(i) > 1e-10 * sv(0)) inv(i) = 1.0 / sv(i);
    beta = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * qty;
  }
  return design * beta;
}

}  // namespace detail

/// Backward induction over the exercise grid. Paths hold prices at t_1..t_{n_gen}.
inline PriceEstimate price_american(const PathCube& paths, const OptionSpec& spec) {
  const std::size_t n = paths.n_pth(), n_gen = paths.n_gen(), d = paths.dim();
  if (n < 50) throw DomainError("price_american: need at least 50 paths");
  if (n_gen < 1 || d < 1) throw DimensionError("price_american: empty path cube");
  if (spec.grid.size() != n_gen + 1) throw DimensionError("price_american: grid must hold t_0..t_n_gen");
  for (std::size_t k = 1; k < spec.grid.size(); ++k)
    if (!(spec.grid[k] > spec.grid[k - 1])) throw DomainError("price_american: grid must be increasing");
  if (!(spec.strike > 0.0)) throw DomainError("price_american: strike must be positive");
  if (!(spec.basis_scale > 0.0)) throw DomainError("price_american: basis scale must be positive");

  const auto& t = spec.grid;
  std::vector<double> value(n), basket(n), exercise(n);
  for (std::size_t i = 0; i < n; ++i) value[i] = payoff(paths.at(i, n_gen - 1), spec.strike);

  // Steps k = n_gen-1 .. 1 in one-based terms; slice index k-1 holds t_k.
  for (std::size_t k = n_gen - 1; k >= 1; --k) {
    const double disc = std::exp(-spec.rate * (t[k] - t[k - 1]));
    for (auto& v : value) v *= disc;
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = paths.at(i, k - 1);
      basket[i] = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(d);
      exercise[i] = std::max(basket[i] - spec.strike, 0.0);
    }

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
      if (!spec.itm_only || exercise[i] > 0.0) rows.push_back(i);

    std::vector<double> continuation(n, 0.0);
    if (!rows.empty()) {
      const auto [mn, mx] = std::minmax_element(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return basket[a] < basket[b]; });
      if (basket[*mn] == basket[*mx]) {
        // One distinct basket value: the regression reduces to its intercept.
        double mean_v = 0.0;
        for (auto i : rows) mean_v += value[i];
        mean_v /= static_cast<double>(rows.size());
        for (auto i : rows) continuation[i] = mean_v;
      } else {
        Matrix design(static_cast<Eigen::Index>(rows.size()), 7);
        Vector y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const auto b = laguerre_basis(basket[rows[r]] / spec.basis_scale);
          for (Eigen::Index c = 0; c < 7; ++c) design(static_cast<Eigen::Index>(r), c) = b[static_cast<std::size_t>(c)];
          y(static_cast<Eigen::Index>(r)) = value[rows[r]];
        }
        const Vector fitted = detail::least_squares_fit(design, y);
        for (std::size_t r = 0; r < rows.size(); ++r) continuation[rows[r]] = fitted(static_cast<Eigen::Index>(r));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double c = std::max(continuation[i], 0.0);
      // Exercising a worthless option is a no-op, so only positive payoffs stop a path.
      if (exercise[i] > 0.0 && exercise[i] >= c) value[i] = exercise[i];
    }
    if (k == 1) break;
  }

  const double disc0 = std::exp(-spec.rate * (t[1] - t[0]));
  for (auto& v : value) v *= disc0;
  PriceEstimate est;
  est.n_pth = n;
  est.price = stats::mean(value);
  est.std_error = stats::stddev(value) / std::sqrt(static_cast<double>(n));
  return est;
}

/// Discounted mean payoff at maturity on the same paths (European exercise).
inline PriceEstimate price_european(const PathCube& paths, const OptionSpec& spec) {
  const std::size_t n = paths.n_pth(), n_gen = paths.n_gen();
  if (spec.grid.size() != n_gen + 1) throw DimensionError("price_european: grid must hold t_0..t_n_gen");
  const double disc = std::exp(-spec.rate * (spec.grid.back() - spec.grid.front()));
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = disc * payoff(paths.at(i, n_gen - 1), spec.strike);
  return {stats::mean(v), stats::stddev(v) / std::sqrt(static_cast<double>(n)), n};
}

}  // namespace gmmnqmc::lsm
