#pragma once

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/garch.hpp"
#include "gmmnqmc/stats.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gmmnqmc::scoring {

/// One estimate per replication.
struct ReplicationSet {
  std::vector<double> values;
  std::string label;
};

/// Unweighted variogram score of order r over all ordered component pairs.
inline double variogram_score(std::span<const double> x, const Matrix& draws, double r = 0.25) {
  if (draws.rows() == 0) throw DomainError("variogram_score: empty predictive distribution");
  if (static_cast<std::size_t>(draws.cols()) != x.size()) throw DimensionError("variogram_score: dimension mismatch");
  if (!(r > 0.0)) throw DomainError("variogram_score: order r must be positive");
  const auto d = static_cast<Eigen::Index>(x.size());
  const auto n = static_cast<double>(draws.rows());
  double score = 0.0;
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) {
      double m = 0.0;
      for (Eigen::Index i = 0; i < draws.rows(); ++i) m += std::pow(std::abs(draws(i, a) - draws(i, b)), r);
      const double diff = std::pow(std::abs(x[static_cast<std::size_t>(a)] - x[static_cast<std::size_t>(b)]), r) - m / n;
      score += diff * diff;
    }
  return score;
}

inline double variogram_score(std::span<const double> x, const garch::Epd& epd, double r = 0.25) {
  return variogram_score(x, epd.draws, r);
}

/// Mean variogram score over a test window; realizations are rows.
inline double average_variogram_score(const Matrix& realizations, const std::vector<garch::Epd>& epds, double r = 0.25) {
  if (epds.empty()) throw DomainError("average_variogram_score: empty test window");
  if (static_cast<std::size_t>(realizations.rows()) != epds.size())
    throw DimensionError("average_variogram_score: realizations and EPDs are not aligned");
  double total = 0.0;
  std::vector<double> x(static_cast<std::size_t>(realizations.cols()));
  for (std::size_t t = 0; t < epds.size(); ++t) {
    for (Eigen::Index j = 0; j < realizations.cols(); ++j) x[static_cast<std::size_t>(j)] = realizations(static_cast<Eigen::Index>(t), j);
    total += variogram_score(x, epds[t], r);
  }
  return total / static_cast<double>(epds.size());
}

struct VrfResult {
  double factor = 1.0;
  /// Set when the quasi variance is zero and the factor is infinite.
  bool infinite = false;
};

/// Ratio of sample variances, pseudo over quasi.
inline VrfResult variance_reduction_factor(const ReplicationSet& pseudo, const ReplicationSet& quasi) {
  if (pseudo.values.size() < 2 || quasi.values.size() < 2)
    throw DomainError("variance_reduction_factor: each set needs at least 2 replications");
  const double vq = stats::variance(quasi.values);
  const double vp = stats::variance(pseudo.values);
  if (vq == 0.0) return {std::numeric_limits<double>::infinity(), true};
  return {vp / vq, false};
}

/// Wald interval mean +- z sd / sqrt(n).
inline std::pair<double, double> wald_ci(const ReplicationSet& rep, double level = 0.95) {
  if (rep.values.size() < 2) throw DomainError("wald_ci: need at least 2 replications");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("wald_ci: level must lie in (0,1)");
  const double m = stats::mean(rep.values);
  const double half = stats::normal_quantile(0.5 * (1.0 + level)) * stats::stddev(rep.values) /
                      std::sqrt(static_cast<double>(rep.values.size()));
  return {m - half, m + half};
}

}  // namespace gmmnqmc::scoring
