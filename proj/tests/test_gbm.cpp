#include "gmmnqmc/gbm.hpp"
#include "gmmnqmc/qmc.hpp"
#include "gmmnqmc/stats.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gmmnqmc;

namespace {

PathCube normal_cube(std::size_t n, std::size_t steps, std::size_t d, std::uint64_t seed) {
  return gbm::normal_increments(qmc::uniform_cube(qmc::Sampling::Pseudo, n, steps, d, seed));
}

gbm::GbmModel model(std::vector<double> sigma, double r, std::size_t steps, double x0 = 100.0) {
  gbm::GbmModel m;
  m.r = r;
  m.sigma = Eigen::Map<Vector>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
  m.x0 = Vector::Constant(m.sigma.size(), x0);
  m.grid = gbm::uniform_grid(steps);
  return m;
}

// Observed price matrix: x0 on the first row, then the first simulated path.
Matrix as_prices(const gbm::GbmModel& m, const PathCube& x) {
  Matrix p(static_cast<Eigen::Index>(x.n_gen() + 1), static_cast<Eigen::Index>(x.dim()));
  p.row(0) = m.x0.transpose();
  for (std::size_t k = 0; k < x.n_gen(); ++k)
    for (std::size_t j = 0; j < x.dim(); ++j) p(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(j)) = x(0, k, j);
  return p;
}

}  // namespace

TEST(Gbm, RoundTripWithPinnedSigma) {
  const auto m = model({0.01, 0.02, 0.015}, 0.0005, 500);
  const PathCube z = normal_cube(1, 500, 3, 4);
  const Matrix prices = as_prices(m, gbm::simulate(m, z));
  const auto est = gbm::estimate(prices, m.r, std::nullopt, m.sigma);
  double worst = 0.0;
  for (std::size_t k = 0; k < 500; ++k)
    for (std::size_t j = 0; j < 3; ++j)
      worst = std::max(worst, std::abs(est.innovations(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) - z(0, k, j)));
  EXPECT_LT(worst, 1e-10);
  EXPECT_EQ(est.model.x0, prices.row(500).transpose());
}

TEST(Gbm, RoundTripOnNonUniformGrid) {
  auto m = model({0.2, 0.1}, 0.01, 4);
  m.grid = {0.0, 0.5, 0.75, 2.0, 2.1};
  const PathCube z = normal_cube(1, 4, 2, 5);
  const Matrix prices = as_prices(m, gbm::simulate(m, z));
  const auto est = gbm::estimate(prices, m.r, m.grid, m.sigma);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 2; ++j)
      EXPECT_NEAR(est.innovations(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)), z(0, k, j), 1e-10);
}

TEST(Gbm, VolatilityEstimate) {
  const auto m = model({0.2}, 0.0, 5000);
  const Matrix prices = as_prices(m, gbm::simulate(m, normal_cube(1, 5000, 1, 6)));
  const auto est = gbm::estimate(prices, 0.0);
  EXPECT_GE(est.model.sigma(0), 0.19);
  EXPECT_LE(est.model.sigma(0), 0.21);
}

TEST(Gbm, DegenerateAndInvalidInputs) {
  Matrix flat(5, 2);
  flat << 100, 50, 101, 51, 102.01, 50, 103.0301, 51, 104.060401, 50;
  EXPECT_THROW(gbm::estimate(flat, 0.0), DegenerateMarginError);
  Matrix zero = Matrix::Constant(4, 1, 10.0);
  zero(2, 0) = 0.0;
  EXPECT_THROW(gbm::estimate(zero, 0.0), DomainError);
  EXPECT_THROW(gbm::estimate(Matrix::Constant(2, 1, 10.0), 0.0), DomainError);
}

TEST(Gbm, ZeroVolatilityIsDeterministicDrift) {
  const auto m = model({0.0, 0.0}, 0.001, 10, 80.0);
  const PathCube x = gbm::simulate(m, normal_cube(7, 10, 2, 7));
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t k = 0; k < 10; ++k)
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(x(i, k, j), 80.0 * std::exp(0.001 * (k + 1.0)), 1e-12);
}

TEST(Gbm, ZeroInnovationsGiveDriftCorrection) {
  const auto m = model({0.3}, 0.0, 5);
  const PathCube x = gbm::simulate(m, PathCube(2, 5, 1, 0.0));
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(x(1, k, 0), 100.0 * std::exp(-0.045 * (k + 1.0)), 1e-12);
}

TEST(Gbm, OneStepMartingale) {
  const auto m = model({0.2}, 0.0005, 1);
  const PathCube x = gbm::simulate(m, normal_cube(100000, 1, 1, 8));
  std::vector<double> ratio(x.values().begin(), x.values().end());
  for (auto& v : ratio) v /= 100.0;
  const double se = stats::stddev(ratio) / std::sqrt(static_cast<double>(ratio.size()));
  EXPECT_NEAR(stats::mean(ratio), std::exp(0.0005), 3 * se);
}

TEST(Gbm, DiscountedMeanPerStepAndPositivity) {
  const auto m = model({0.02, 0.01}, 0.0005, 20);
  const PathCube x = gbm::simulate(m, normal_cube(100000, 20, 2, 9));
  for (std::size_t k = 0; k < 20; ++k)
    for (std::size_t j = 0; j < 2; ++j) {
      std::vector<double> v(x.n_pth());
      for (std::size_t i = 0; i < x.n_pth(); ++i) {
        ASSERT_GT(x(i, k, j), 0.0);
        v[i] = std::exp(-0.0005 * (k + 1.0)) * x(i, k, j);
      }
      EXPECT_NEAR(stats::mean(v), 100.0, 3 * stats::stddev(v) / std::sqrt(static_cast<double>(v.size()))) << k << " " << j;
    }
}

TEST(Gbm, ShapeErrors) {
  const auto m = model({0.2, 0.1}, 0.0, 3);
  EXPECT_THROW(gbm::simulate(m, PathCube(2, 3, 3)), DimensionError);
  EXPECT_THROW(gbm::simulate(m, PathCube(2, 4, 2)), DimensionError);
}
