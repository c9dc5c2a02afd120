#pragma once

// Statistical primitives shared by the pipelines: normal and unit-variance t
// distribution functions, ranks and pseudo-observations, Kendall's tau,
// empirical copulas, and the Cramer-von Mises two-sample copula statistic.

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/detail/parallel.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

namespace gmmnqmc::stats {

// ---------------------------------------------------------------------------
// Normal distribution
// ---------------------------------------------------------------------------

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Phi^{-1}(p). Acklam's rational approximation followed by one Halley step
/// against erfc, giving close to full double precision.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must lie in (0,1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Residual Phi(x) - p, formed in each region so that it avoids cancellation.
  double e;
  if (p < p_low) e = normal_cdf(x) - p;
  else if (p <= 1.0 - p_low) e = 0.5 * std::erf(x / std::numbers::sqrt2) - (p - 0.5);
  else e = (1.0 - p) - 0.5 * std::erfc(x / std::numbers::sqrt2);
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

// ---------------------------------------------------------------------------
// Student t (standard and unit-variance "scaled")
// ---------------------------------------------------------------------------

inline double student_t_log_pdf(double x, double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
         0.5 * (nu + 1.0) * std::log1p(x * x / nu);
}

inline double student_t_cdf(double x, double nu) {
  if (!(nu > 0.0)) throw DomainError("student_t_cdf: nu must be positive");
  const double x2 = x * x;
  // Two-sided tail mass P(|T| > |x|).
  double tail;
  if (x2 < nu)
    tail = boost::math::ibetac(0.5, 0.5 * nu, x2 / (nu + x2));
  else
    tail = boost::math::ibeta(0.5 * nu, 0.5, nu / (nu + x2));
  return x < 0.0 ? 0.5 * tail : 1.0 - 0.5 * tail;
}

/// Quantile of the standard t distribution via incomplete-beta inversion,
/// polished by a Newton step on the CDF. Large nu uses the Cornish-Fisher
/// expansion around the normal quantile.
inline double student_t_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("student_t_quantile: p must lie in (0,1)");
  if (!(nu > 0.0)) throw DomainError("student_t_quantile: nu must be positive");
  if (p == 0.5) return 0.0;
  if (nu >= 1e5) {
    const double z = normal_quantile(p);
    const double z2 = z * z;
    const double g1 = (z2 * z + z) / 4.0;
    const double g2 = (5.0 * z2 * z2 * z + 16.0 * z2 * z + 3.0 * z) / 96.0;
    return z + g1 / nu + g2 / (nu * nu);
  }
  const double tail_p = std::min(p, 1.0 - p);  // one-sided tail
  const double two_sided = 2.0 * tail_p;
  double x2;
  if (two_sided < 0.5) {
    const double y = boost::math::ibeta_inv(0.5 * nu, 0.5, two_sided);  // y = nu / (nu + x^2)
    x2 = nu * (1.0 - y) / y;
  } else {
    const double z = boost::math::ibetac_inv(0.5, 0.5 * nu, two_sided);  // z = x^2 / (nu + x^2)
    x2 = nu * z / (1.0 - z);
  }
  double x = std::sqrt(x2);
  if (p < 0.5) x = -x;
  if (std::isfinite(x)) {
    const double f = std::exp(student_t_log_pdf(x, nu));
    if (f > 0.0) {
      const double r = p < 0.5 ? student_t_cdf(x, nu) - p : (1.0 - p) - (1.0 - student_t_cdf(x, nu));
      const double step = (p < 0.5 ? r : -r) / f;
      if (std::abs(step) < 1e-6 * (1.0 + std::abs(x))) x -= step;
    }
  }
  return x;
}

inline void check_scaled_nu(double nu) {
  if (!(nu > 2.0)) throw DomainError("scaled t distribution requires nu > 2 (finite variance)");
}

/// Quantile of the unit-variance t distribution F(z) = t_nu(z * sqrt(nu / (nu - 2))).
inline double scaled_t_quantile(double p, double nu) {
  check_scaled_nu(nu);
  return student_t_quantile(p, nu) * std::sqrt((nu - 2.0) / nu);
}

inline double scaled_t_cdf(double z, double nu) {
  check_scaled_nu(nu);
  return student_t_cdf(z * std::sqrt(nu / (nu - 2.0)), nu);
}

inline double scaled_t_log_pdf(double z, double nu) {
  check_scaled_nu(nu);
  const double s = std::sqrt(nu / (nu - 2.0));
  return student_t_log_pdf(z * s, nu) + std::log(s);
}

/// Tabulated scaled_t_quantile for one nu, for bulk evaluation. In w = Phi^{-1}(p)
/// the function h(w) = asinh(q(Phi(w))) is smooth and grows at most
/// quadratically, so cubic Hermite interpolation with exact slopes on a grid of
/// spacing 1/128 over |w| <= 8.5 gives relative errors near 1e-10. Inputs
/// beyond the grid fall back to the exact quantile.
class ScaledTQuantile {
 public:
  explicit ScaledTQuantile(double nu) : nu_(nu) {
    check_scaled_nu(nu);
    const std::size_t m = 2 * kHalf + 1;
    h_.resize(m);
    dh_.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double w = (static_cast<double>(i) - static_cast<double>(kHalf)) * kStep;
      const double q = w == 0.0 ? 0.0 : exact(w);
      h_[i] = std::asinh(q);
      // dq/dw = phi(w) / f(q), with f the unit-variance t density.
      const double dq = std::exp(-0.5 * w * w - scaled_t_log_pdf(q, nu)) / std::sqrt(2.0 * std::numbers::pi);
      dh_[i] = dq / std::sqrt(1.0 + q * q);
    }
  }

  double nu() const { return nu_; }

  double operator()(double p) const {
    const double w = normal_quantile(p);
    const double pos = w / kStep + static_cast<double>(kHalf);
    if (!(pos >= 0.0 && pos < static_cast<double>(2 * kHalf))) return scaled_t_quantile(p, nu_);
    const auto i = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(i);
    const double t2 = t * t, t3 = t2 * t;
    const double h = (2 * t3 - 3 * t2 + 1) * h_[i] + (t3 - 2 * t2 + t) * kStep * dh_[i] + (-2 * t3 + 3 * t2) * h_[i + 1] +
                     (t3 - t2) * kStep * dh_[i + 1];
    return std::sinh(h);
  }

 private:
  static constexpr std::size_t kHalf = 1088;  // 8.5 * 128
  static constexpr double kStep = 1.0 / 128.0;

  double exact(double w) const {
    // Tail probabilities are formed directly so that large |w| keeps full precision.
    const double tail = 0.5 * std::erfc(std::abs(w) / std::numbers::sqrt2);
    const double q = scaled_t_quantile(tail, nu_);
    return w < 0.0 ? q : -q;
  }

  double nu_;
  std::vector<double> h_, dh_;
};

/// Quantile of the chi-square distribution with k degrees of freedom.
inline double chi_square_quantile(double p, double k) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("chi_square_quantile: p must lie in (0,1)");
  return 2.0 * boost::math::gamma_p_inv(0.5 * k, p);
}

// ---------------------------------------------------------------------------
// Moments
// ---------------------------------------------------------------------------

inline double mean(std::span<const double> x) {
  return detail::compensated_sum(x) / static_cast<double>(x.size());
}

/// Unbiased sample variance (divisor n - 1).
inline double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

inline std::vector<double> column(const Matrix& m, Eigen::Index j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("pearson_correlation: length mismatch");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Ranks
// ---------------------------------------------------------------------------

/// 1-based ranks; tied values share the average of their ranks.
inline std::vector<double> average_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(n);
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo + 1;
    while (hi < n && x[order[hi]] == x[order[lo]]) ++hi;
    const double avg = 0.5 * static_cast<double>(lo + 1 + hi);
    for (std::size_t t = lo; t < hi; ++t) r[order[t]] = avg;
    lo = hi;
  }
  return r;
}

/// Column-wise ranks divided by n + 1.
inline Matrix pseudo_observations(const Matrix& z) {
  if (z.rows() < 1) throw DomainError("pseudo_observations: need at least one row");
  Matrix u(z.rows(), z.cols());
  const double denom = static_cast<double>(z.rows()) + 1.0;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const auto col = column(z, j);
    const auto r = average_ranks(col);
    for (Eigen::Index i = 0; i < z.rows(); ++i) u(i, j) = r[static_cast<std::size_t>(i)] / denom;
  }
  return u;
}

namespace detail_tau {

// Merge sort counting swaps (discordant pairs within runs of equal x removed by caller).
inline std::uint64_t merge_count(std::vector<double>& y, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(y, buf, lo, mid) + merge_count(y, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (y[j] < y[i]) {
      swaps += mid - i;
      buf[k++] = y[j++];
    } else {
      buf[k++] = y[i++];
    }
  }
  while (i < mid) buf[k++] = y[i++];
  while (j < hi) buf[k++] = y[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            y.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

inline std::uint64_t tied_pairs(const std::vector<double>& sorted) {
  std::uint64_t t = 0;
  for (std::size_t lo = 0; lo < sorted.size();) {
    std::size_t hi = lo + 1;
    while (hi < sorted.size() && sorted[hi] == sorted[lo]) ++hi;
    const std::uint64_t m = hi - lo;
    t += m * (m - 1) / 2;
    lo = hi;
  }
  return t;
}

}  // namespace detail_tau

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
inline double kendall_tau(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("kendall_tau: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = x[order[i]];
    ys[i] = y[order[i]];
  }
  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t ties_x = detail_tau::tied_pairs(xs);
  std::uint64_t ties_xy = 0;
  for (std::size_t lo = 0; lo < n;) {
    std::size_t hi = lo + 1;
    while (hi < n && xs[hi] == xs[lo] && ys[hi] == ys[lo]) ++hi;
    const std::uint64_t m = hi - lo;
    ties_xy += m * (m - 1) / 2;
    lo = hi;
  }
  std::vector<double> buf(n);
  const std::uint64_t swaps = detail_tau::merge_count(ys, buf, 0, n);
  const std::uint64_t ties_y = detail_tau::tied_pairs(ys);
  const double concordant_minus_discordant = static_cast<double>(total) - static_cast<double>(ties_x) -
                                              static_cast<double>(ties_y) + static_cast<double>(ties_xy) -
                                              2.0 * static_cast<double>(swaps);
  const double denom = std::sqrt(static_cast<double>(total - ties_x) * static_cast<double>(total - ties_y));
  return denom > 0.0 ? concordant_minus_discordant / denom : 0.0;
}

inline double kendall_tau(const Matrix& u, Eigen::Index a, Eigen::Index b) {
  const auto x = column(u, a), y = column(u, b);
  return kendall_tau(x, y);
}

// ---------------------------------------------------------------------------
// Empirical copulas and the Cramer-von Mises statistic
// ---------------------------------------------------------------------------

/// C_n(u) = (1/n) #{i : X_i <= u componentwise}.
class EmpiricalCopula {
 public:
  explicit EmpiricalCopula(Matrix support) : support_(std::move(support)) {}

  double operator()(std::span<const double> u) const {
    if (static_cast<Eigen::Index>(u.size()) != support_.cols())
      throw DimensionError("EmpiricalCopula: argument dimension mismatch");
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < support_.rows(); ++i) {
      bool below = true;
      for (Eigen::Index j = 0; j < support_.cols() && below; ++j) below = support_(i, j) <= u[static_cast<std::size_t>(j)];
      count += below;
    }
    return static_cast<double>(count) / static_cast<double>(support_.rows());
  }

  const Matrix& support() const noexcept { return support_; }

 private:
  Matrix support_;
};

/// (1/(n_a n_b)) sum_i sum_l prod_k (1 - max(A_ik, B_lk)) = integral of C_A * C_B.
inline double empirical_copula_inner(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("cvm: dimension mismatch");
  const Eigen::Index d = a.cols();
  // Row-major copies keep the inner loop contiguous.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ar = a, br = b;
  std::vector<double> row_sums(static_cast<std::size_t>(a.rows()));
  detail::parallel_for(row_sums.size(), [&](std::size_t i) {
    const double* x = ar.data() + static_cast<Eigen::Index>(i) * d;
    double s = 0.0;
    for (Eigen::Index l = 0; l < br.rows(); ++l) {
      const double* y = br.data() + l * d;
      double prod = 1.0;
      for (Eigen::Index k = 0; k < d; ++k) prod *= 1.0 - std::max(x[k], y[k]);
      s += prod;
    }
    row_sums[i] = s;
  }, 16);
  return detail::compensated_sum(row_sums) / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

/// S = (1/sqrt(1/n_a + 1/n_b)) * integral over [0,1]^d of (C_A - C_B)^2, in closed form.
/// `aa` optionally supplies a cached empirical_copula_inner(a, a).
inline double cvm_statistic(const Matrix& a, const Matrix& b, double aa = std::numeric_limits<double>::quiet_NaN()) {
  if (a.cols() != b.cols()) throw DimensionError("cvm_statistic: samples have different dimensions");
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("cvm_statistic: empty sample");
  const double iaa = std::isnan(aa) ? empirical_copula_inner(a, a) : aa;
  const double iab = empirical_copula_inner(a, b);
  const double ibb = empirical_copula_inner(b, b);
  const double integral = std::max(0.0, iaa - 2.0 * iab + ibb);
  const double scale = 1.0 / std::sqrt(1.0 / static_cast<double>(a.rows()) + 1.0 / static_cast<double>(b.rows()));
  return scale * integral;
}

/// One-sample Kolmogorov-Smirnov statistic against U(0,1).
inline double ks_uniform_statistic(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = std::clamp(s[i], 0.0, 1.0);
    dmax = std::max({dmax, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return dmax;
}

/// Asymptotic KS critical value sqrt(-log(alpha/2)/2) / sqrt(n).
inline double ks_critical_value(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(0.5 * alpha)) / std::sqrt(static_cast<double>(n));
}

}  // namespace gmmnqmc::stats
