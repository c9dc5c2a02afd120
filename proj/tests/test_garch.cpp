#include "gmmnqmc/copulas.hpp"
#include "gmmnqmc/garch.hpp"
#include "gmmnqmc/qmc.hpp"
#include "gmmnqmc/stats.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <random>

using namespace gmmnqmc;
using garch::MarginParams;
using garch::MarginState;

namespace {

MarginParams reference_params() {
  MarginParams p;
  p.mu = 0.0;
  p.phi = 0.5;
  p.gamma = -0.3;
  p.omega = 0.05;
  p.alpha = 0.05;
  p.beta = 0.9;
  p.nu = 6.0;
  return p;
}

// n x d scaled-t innovations from independent uniforms.
Matrix scaled_t_innovations(std::size_t n, std::size_t d, double nu, std::uint64_t seed) {
  Matrix z = qmc::pseudo_uniforms(n, d, seed).points();
  const stats::ScaledTQuantile q(nu);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = q(z.data()[i]);
  return z;
}

struct Simulated {
  Matrix x, z;
};

// Simulated series with a discarded warm-up so the start state is forgotten.
Simulated simulate_series(const MarginParams& p, std::size_t n, std::size_t d, std::uint64_t seed) {
  const std::size_t warm = 500;
  const Matrix z = scaled_t_innovations(n + warm, d, p.nu, seed);
  const std::vector<MarginState> s0(d, MarginState{p.mu, p.mu, p.omega / (1.0 - p.alpha - p.beta)});
  const Matrix x = garch::simulate(std::vector<MarginParams>(d, p), s0, z);
  return {x.bottomRows(static_cast<Eigen::Index>(n)), z.bottomRows(static_cast<Eigen::Index>(n))};
}

const garch::FitResult& reference_fit() {
  static const garch::FitResult fit = garch::fit(simulate_series(reference_params(), 5000, 2, 11).x);
  return fit;
}

const Simulated& reference_data() {
  static const Simulated s = simulate_series(reference_params(), 5000, 2, 11);
  return s;
}

}  // namespace

TEST(GarchRecursion, OneStepUpdateBySubstitution) {
  const MarginParams p = reference_params();
  const MarginState s{0.7, 0.2, 1.3};
  const MarginState nm = garch::next_moments(p, s);
  EXPECT_DOUBLE_EQ(nm.mu, 0.0 + 0.5 * 0.7 - 0.3 * 0.5);
  EXPECT_DOUBLE_EQ(nm.sigma2, 0.05 + 0.05 * 0.25 + 0.9 * 1.3);
}

TEST(GarchFilter, ZeroRowsLeaveStateUnchanged) {
  garch::ArmaGarchModel m{{reference_params()}, {MarginState{0.1, 0.2, 0.3}}};
  EXPECT_EQ(garch::filter(m, Matrix(0, 1)), m.state);
}

TEST(GarchFilter, OneNewObservation) {
  garch::ArmaGarchModel m{{reference_params()}, {MarginState{0.1, 0.2, 0.3}}};
  Matrix x(1, 1);
  x << 1.5;
  const auto st = garch::filter(m, x);
  const auto& p = m.margins[0];
  const double mu_t = p.mu + p.phi * (0.1 - p.mu) + p.gamma * (0.1 - 0.2);
  const double s2_t = p.omega + p.alpha * 0.01 + p.beta * 0.3;
  EXPECT_DOUBLE_EQ(st[0].x, 1.5);
  EXPECT_DOUBLE_EQ(st[0].mu, mu_t);
  EXPECT_DOUBLE_EQ(st[0].sigma2, s2_t);
  // The following update uses (x - mu_t) with the new state.
  const MarginState next = garch::next_moments(p, st[0]);
  EXPECT_DOUBLE_EQ(next.sigma2, p.omega + p.alpha * (1.5 - mu_t) * (1.5 - mu_t) + p.beta * s2_t);
}

TEST(GarchFilter, ReproducesInSampleSequences) {
  const auto& fit = reference_fit();
  const Matrix& x = reference_data().x;
  for (std::size_t j = 0; j < 2; ++j) {
    const auto col = stats::column(x, static_cast<Eigen::Index>(j));
    garch::ArmaGarchModel m{{fit.model.margins[j]}, {garch::presample_state(col)}};
    Matrix one(x.rows(), 1);
    one.col(0) = x.col(static_cast<Eigen::Index>(j));
    EXPECT_EQ(garch::filter(m, one)[0], fit.model.state[j]);
    const auto path = garch::filter_margin(fit.model.margins[j], garch::presample_state(col), col);
    for (Eigen::Index k = 0; k < x.rows(); ++k) {
      ASSERT_EQ(path.mu[static_cast<std::size_t>(k)], fit.mu(k, static_cast<Eigen::Index>(j)));
      ASSERT_EQ(path.sigma2[static_cast<std::size_t>(k)], fit.sigma2(k, static_cast<Eigen::Index>(j)));
    }
  }
}

TEST(GarchRoundTrip, PinnedParametersRecoverInnovations) {
  const MarginParams p = reference_params();
  const Matrix z = scaled_t_innovations(300, 1, p.nu, 3);
  const MarginState s0{0.4, -0.1, 0.8};
  const Matrix x = garch::simulate({p}, {s0}, z);
  const auto path = garch::filter_margin(p, s0, stats::column(x, 0));
  double worst = 0.0;
  for (std::size_t k = 50; k < 300; ++k) worst = std::max(worst, std::abs(path.z[k] - z(static_cast<Eigen::Index>(k), 0)));
  EXPECT_LT(worst, 1e-8);
}

TEST(GarchRoundTrip, StartStateErrorDecaysGeometrically) {
  // Starting from the wrong state only perturbs the early residuals.
  const MarginParams p = reference_params();
  const Matrix z = scaled_t_innovations(1000, 1, p.nu, 4);
  const Matrix x = garch::simulate({p}, {MarginState{0.0, 0.0, 1.0}}, z);
  const auto col = stats::column(x, 0);
  const auto path = garch::filter_margin(p, garch::presample_state(col), col);
  double late = 0.0;
  for (std::size_t k = 500; k < 1000; ++k) late = std::max(late, std::abs(path.z[k] - z(static_cast<Eigen::Index>(k), 0)));
  EXPECT_LT(late, 1e-8);
}

TEST(GarchFit, RecoversKnownModel) {
  const auto& fit = reference_fit();
  const Matrix& z = reference_data().z;
  for (std::size_t j = 0; j < 2; ++j) {
    const auto& p = fit.model.margins[j];
    EXPECT_TRUE(garch::is_admissible_fit(p));
    EXPECT_GE(p.alpha + p.beta, 0.85);
    EXPECT_LE(p.alpha + p.beta, 0.99);
    EXPECT_GT(stats::pearson_correlation(stats::column(fit.residuals, static_cast<Eigen::Index>(j)),
                                         stats::column(z, static_cast<Eigen::Index>(j))),
              0.95);
  }
}

TEST(GarchFit, ResidualUniformsAreUniformAndInterior) {
  const auto& fit = reference_fit();
  EXPECT_EQ(fit.uniforms.rows(), 5000 - 10);
  EXPECT_GT(fit.uniforms.minCoeff(), 0.0);
  EXPECT_LT(fit.uniforms.maxCoeff(), 1.0);
  for (Eigen::Index j = 0; j < 2; ++j)
    EXPECT_LT(stats::ks_uniform_statistic(stats::column(fit.uniforms, j)), stats::ks_critical_value(4990, 0.01));
}

TEST(GarchFit, RankUniformsOption) {
  garch::FitOptions opt;
  opt.rank_uniforms = true;
  opt.burn_in = 20;
  const Matrix x = simulate_series(reference_params(), 400, 1, 5).x;
  const auto fit = garch::fit(x, opt);
  EXPECT_EQ(fit.uniforms.rows(), 380);
  std::vector<double> u = stats::column(fit.uniforms, 0);
  std::sort(u.begin(), u.end());
  EXPECT_DOUBLE_EQ(u.front(), 1.0 / 381.0);
}

TEST(GarchFit, IidLocationScaleData) {
  MarginParams p;
  p.mu = 0.3;
  p.omega = 2.0;
  p.nu = 6.0;
  const Matrix z = scaled_t_innovations(3000, 1, p.nu, 6);
  const Matrix x = (z.array() * std::sqrt(p.omega) + p.mu).matrix();
  const auto fit = garch::fit(x);
  const auto& q = fit.model.margins[0];
  const double se = std::sqrt(stats::variance(stats::column(x, 0)) / 3000.0);
  EXPECT_NEAR(q.mu, p.mu, 3 * se);
  std::vector<double> s2(static_cast<std::size_t>(fit.sigma2.rows() - 50));
  for (std::size_t k = 0; k < s2.size(); ++k) s2[k] = fit.sigma2(static_cast<Eigen::Index>(k + 50), 0);
  EXPECT_LT(stats::stddev(s2) / stats::mean(s2), 0.05);
  EXPECT_NEAR(stats::mean(s2), p.omega, 0.15 * p.omega);
}

TEST(GarchFit, Preconditions) {
  EXPECT_THROW(garch::fit(Matrix::Random(100, 2)), DomainError);
  EXPECT_THROW(garch::fit(Matrix::Constant(300, 1, 1.0)), DegenerateMarginError);
}

TEST(GarchModel, ValidationRejectsNonStationary) {
  MarginParams p = reference_params();
  p.beta = 0.96;
  EXPECT_FALSE(garch::is_stationary(p));
  EXPECT_THROW(garch::validate({{p}, {MarginState{}}}), DomainError);
  MarginParams q = reference_params();
  q.gamma = -q.phi;
  EXPECT_TRUE(garch::is_stationary(q));
  EXPECT_FALSE(garch::is_admissible_fit(q));
}

TEST(GarchForecast, MedianUniformsFollowMeanRecursion) {
  const MarginParams p = reference_params();
  garch::ArmaGarchModel m{{p, p}, {MarginState{1.0, 0.2, 0.5}, MarginState{-0.4, 0.1, 2.0}}};
  const PathCube u(5, 4, 2, 0.5);
  const auto epds = garch::forecast(m, u, 4, 17);
  ASSERT_EQ(epds.size(), 4u);
  for (std::size_t j = 0; j < 2; ++j) {
    MarginState s = m.state[j];
    for (std::size_t h = 0; h < 4; ++h) {
      const MarginState nm = garch::next_moments(p, s);
      s = {nm.mu, nm.mu, nm.sigma2};
      EXPECT_EQ(epds[h].h, h + 1);
      EXPECT_EQ(epds[h].origin, 17u);
      for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(epds[h].draws(i, static_cast<Eigen::Index>(j)), nm.mu, 1e-14);
    }
  }
}

TEST(GarchForecast, IidModelMean) {
  MarginParams p;
  p.mu = 1.5;
  p.omega = 0.8;
  p.nu = 5.0;
  garch::ArmaGarchModel m{{p}, {MarginState{0.0, 0.0, 1.0}}};
  const auto epd = garch::forecast(m, qmc::uniform_cube(qmc::Sampling::Pseudo, 10000, 1, 1, 3), 1)[0];
  const auto col = stats::column(epd.draws, 0);
  EXPECT_NEAR(stats::mean(col), p.mu, 3 * stats::stddev(col) / 100.0);
}

TEST(GarchForecast, DependencePassThrough) {
  const MarginParams p = reference_params();
  garch::ArmaGarchModel m{{p, p}, {MarginState{0.3, 0.1, 1.0}, MarginState{-0.2, 0.0, 0.7}}};
  const double rho = 0.6;
  const Matrix tu = copulas::sample(copulas::StudentT{copulas::equicorrelation(2, rho), 4.0}, qmc::pseudo_uniforms(10000, 3, 8).points());
  const auto dep = garch::forecast(m, PathCube::from_rows(tu, 10000, 1), 1)[0];
  EXPECT_NEAR(stats::kendall_tau(dep.draws, 0, 1), 2.0 / std::numbers::pi * std::asin(rho), 0.05);
  const auto ind = garch::forecast(m, qmc::uniform_cube(qmc::Sampling::Pseudo, 10000, 1, 2, 9), 1)[0];
  EXPECT_NEAR(stats::kendall_tau(ind.draws, 0, 1), 0.0, 0.05);
}

TEST(GarchForecast, DeterministicAndOrderInvariant) {
  const MarginParams p = reference_params();
  garch::ArmaGarchModel m{{p, p, p}, std::vector<MarginState>(3, MarginState{0.1, 0.0, 1.0})};
  const PathCube u = qmc::uniform_cube(qmc::Sampling::Quasi, 300, 5, 3, 12);
  const auto a = garch::forecast(m, u, 5), b = garch::forecast(m, u, 5);
  std::vector<std::size_t> perm(300);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  PathCube up(300, 5, 3);
  for (std::size_t i = 0; i < 300; ++i)
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t j = 0; j < 3; ++j) up(i, k, j) = u(perm[i], k, j);
  const auto c = garch::forecast(m, up, 5);
  for (std::size_t h = 0; h < 5; ++h) {
    EXPECT_EQ(a[h].draws, b[h].draws);
    for (std::size_t i = 0; i < 300; ++i) EXPECT_EQ(c[h].draws.row(static_cast<Eigen::Index>(i)), a[h].draws.row(static_cast<Eigen::Index>(perm[i])));
  }
}

TEST(GarchForecast, ShapeErrors) {
  garch::ArmaGarchModel m{{reference_params()}, {MarginState{}}};
  EXPECT_THROW(garch::forecast(m, PathCube(10, 2, 1, 0.5), 3), DimensionError);
  EXPECT_THROW(garch::forecast(m, PathCube(10, 1, 2, 0.5), 1), DimensionError);
}

TEST(GarchTransform, EncodeDecodeRoundTrip) {
  const MarginParams p = reference_params();
  const MarginParams q = garch::detail::decode(garch::detail::encode(p));
  EXPECT_NEAR(q.phi, p.phi, 1e-14);
  EXPECT_NEAR(q.gamma, p.gamma, 1e-14);
  EXPECT_NEAR(q.omega, p.omega, 1e-14);
  EXPECT_NEAR(q.alpha, p.alpha, 1e-14);
  EXPECT_NEAR(q.beta, p.beta, 1e-14);
  EXPECT_NEAR(q.nu, p.nu, 1e-13);
}
