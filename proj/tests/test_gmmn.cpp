#include "gmmnqmc/copulas.hpp"
#include "gmmnqmc/gmmn.hpp"
#include "gmmnqmc/qmc.hpp"
#include "gmmnqmc/stats.hpp"
#include "invariants.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace gmmnqmc;

namespace {

Matrix random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  return qmc::pseudo_uniforms(static_cast<std::size_t>(n), static_cast<std::size_t>(d), seed).points();
}

// One default-configuration training run on Clayton(2) data, shared by the tests below.
const gmmn::TrainResult& clayton_fit() {
  static const gmmn::TrainResult res = [] {
    const Matrix u = copulas::sample(copulas::Clayton{2, 2.0}, qmc::pseudo_uniforms(5000, 2, 2024).points());
    return gmmn::train(stats::pseudo_observations(u), gmmn::TrainConfig{}, 77);
  }();
  return res;
}

const Matrix& clayton_training_data() {
  static const Matrix u =
      stats::pseudo_observations(copulas::sample(copulas::Clayton{2, 2.0}, qmc::pseudo_uniforms(5000, 2, 2024).points()));
  return u;
}

}  // namespace

TEST(Mmd, IdenticalSamplesGiveZero) {
  const Matrix a = random_matrix(30, 3, 1);
  EXPECT_EQ(gmmn::mmd2(a, a, gmmn::default_bandwidths()), 0.0);
}

TEST(Mmd, SinglePointClosedForm) {
  Matrix a(1, 2), b(1, 2);
  a << 0.1, 0.4;
  b << 0.5, 0.2;
  const std::vector<double> bw{0.1, 0.5, 1.0};
  const double d2 = 0.16 + 0.04;
  double expected = 0.0;
  for (double s : bw) expected += 2.0 * (1.0 - std::exp(-d2 / (2 * s * s)));
  EXPECT_NEAR(gmmn::mmd2(a, b, bw), expected, 1e-15);
}

TEST(Mmd, MatchesNaiveTripleLoop) {
  const Matrix a = random_matrix(50, 3, 2), b = random_matrix(50, 3, 3);
  const auto& bw = gmmn::default_bandwidths();
  EXPECT_NEAR(gmmn::mmd2(a, b, bw), oracle::mmd2_naive(a, b, bw), 1e-12);
  const Matrix c = random_matrix(17, 3, 4);
  EXPECT_NEAR(gmmn::mmd2(a, c, bw), oracle::mmd2_naive(a, c, bw), 1e-12);
}

TEST(Mmd, NonNegativeAndRejectsMismatch) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix a = random_matrix(10 + static_cast<Eigen::Index>(s), 2, 100 + s);
    const Matrix b = random_matrix(15, 2, 200 + s);
    EXPECT_GE(gmmn::mmd2(a, b, gmmn::default_bandwidths()), -1e-12);
  }
  EXPECT_THROW(gmmn::mmd2(random_matrix(3, 2, 1), random_matrix(3, 3, 1), gmmn::default_bandwidths()), DimensionError);
  EXPECT_THROW(gmmn::mmd2(random_matrix(3, 2, 1), random_matrix(3, 2, 2), std::vector<double>{}), DomainError);
}

TEST(Mmd, GradientWithRespectToGeneratedSample) {
  const Matrix x = random_matrix(6, 2, 5);
  Matrix y = random_matrix(4, 2, 6);
  const std::vector<double> bw{0.05, 0.2, 1.0};
  Matrix g;
  gmmn::mmd2_with_gradient(x, y, bw, g);
  EXPECT_NEAR(gmmn::mmd2_with_gradient(x, y, bw, g), gmmn::mmd2(x, y, bw), 1e-14);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double keep = y.data()[i];
    y.data()[i] = keep + h;
    const double up = gmmn::mmd2(x, y, bw);
    y.data()[i] = keep - h;
    const double down = gmmn::mmd2(x, y, bw);
    y.data()[i] = keep;
    EXPECT_NEAR(g.data()[i], (up - down) / (2 * h), 1e-6 * std::max(1.0, std::abs(g.data()[i])));
  }
}

TEST(Mmd, NetworkGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) EXPECT_LE(invariants::mmd_gradient_max_rel_error(seed), 1e-4) << seed;
}

TEST(Model, ZeroWeightsGiveConstantSigmoidOfBias) {
  gmmn::GmmnModel m = gmmn::make_model(3, {4}, 1);
  for (auto& w : m.weights) w.setZero();
  m.biases.back() << 0.0, 1.0, -2.0;
  const PathCube c = gmmn::sample_paths_pseudo(m, 5, 3, 9);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_DOUBLE_EQ(c(i, k, 0), 0.5);
      EXPECT_DOUBLE_EQ(c(i, k, 1), 1.0 / (1.0 + std::exp(-1.0)));
      EXPECT_DOUBLE_EQ(c(i, k, 2), 1.0 / (1.0 + std::exp(2.0)));
    }
}

TEST(Model, OutputInsideUnitCube) {
  gmmn::GmmnModel m = gmmn::make_model(2, {8}, 3);
  for (auto& w : m.weights) w *= 50.0;
  const PathCube c = gmmn::sample_paths_pseudo(m, 1, 1, 1);
  EXPECT_EQ(c.size(), 2u);
  const PathCube big = gmmn::sample_paths_pseudo(m, 2000, 2, 4);
  for (double v : big.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_NO_THROW(m.validate());
  m.activations.back() = gmmn::Activation::ReLU;
  EXPECT_THROW(m.validate(), DomainError);
}

TEST(Sampling, SamplersShareTheGenerator) {
  const gmmn::GmmnModel m = gmmn::make_model(2, {6}, 5);
  const PathCube u = qmc::uniform_cube(qmc::Sampling::Quasi, 64, 3, 2, 11);
  EXPECT_EQ(gmmn::map_uniforms(m, u), gmmn::sample_paths_quasi(m, 64, 3, 11));
  const PathCube p = qmc::uniform_cube(qmc::Sampling::Pseudo, 64, 3, 2, 11);
  EXPECT_EQ(gmmn::map_uniforms(m, p), gmmn::sample_paths_pseudo(m, 64, 3, 11));
}

TEST(Sampling, DeterministicInSeed) {
  const gmmn::GmmnModel m = gmmn::make_model(3, {6}, 5);
  EXPECT_EQ(gmmn::sample_paths(m, qmc::Sampling::Quasi, 20, 4, 8), gmmn::sample_paths(m, qmc::Sampling::Quasi, 20, 4, 8));
  EXPECT_EQ(gmmn::sample_paths(m, qmc::Sampling::Pseudo, 20, 4, 8), gmmn::sample_paths(m, qmc::Sampling::Pseudo, 20, 4, 8));
  EXPECT_NE(gmmn::sample_paths(m, qmc::Sampling::Pseudo, 20, 4, 8), gmmn::sample_paths(m, qmc::Sampling::Pseudo, 20, 4, 9));
}

TEST(Sampling, QuasiDimensionBound) {
  const gmmn::GmmnModel m = gmmn::make_model(10, {4}, 5);
  EXPECT_NO_THROW(gmmn::sample_paths_quasi(m, 2, 100, 1));
  EXPECT_THROW(gmmn::sample_paths_quasi(m, 2, 3000, 1), UnsupportedDimensionError);
}

TEST(Train, DeterministicGivenSeed) {
  const Matrix u = random_matrix(300, 2, 12);
  gmmn::TrainConfig cfg;
  cfg.hidden = {16};
  cfg.epochs = 5;
  cfg.batch_size = 64;
  const auto a = gmmn::train(u, cfg, 3), b = gmmn::train(u, cfg, 3);
  for (std::size_t l = 0; l < a.model.layers(); ++l) {
    EXPECT_EQ(a.model.weights[l], b.model.weights[l]);
    EXPECT_EQ(a.model.biases[l], b.model.biases[l]);
  }
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  const auto c = gmmn::train(u, cfg, 4);
  EXPECT_NE(a.model.weights[0], c.model.weights[0]);
}

TEST(Train, RejectsBadConfig) {
  const Matrix u = random_matrix(100, 2, 1);
  gmmn::TrainConfig cfg;
  EXPECT_THROW(gmmn::train(u, cfg, 1), DomainError);  // batch 128 > 100 rows
  cfg.batch_size = 32;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(gmmn::train(u, cfg, 1), DomainError);
  EXPECT_THROW(gmmn::train(random_matrix(100, 1, 1), gmmn::TrainConfig{}, 1), DomainError);
}

TEST(Train, NonFiniteLossAborts) {
  Matrix u = random_matrix(64, 2, 1);
  u(3, 1) = std::numeric_limits<double>::quiet_NaN();
  gmmn::TrainConfig cfg;
  cfg.hidden = {4};
  cfg.batch_size = 64;
  cfg.epochs = 2;
  try {
    gmmn::train(u, cfg, 1);
    FAIL() << "expected NonFiniteLossError";
  } catch (const gmmn::NonFiniteLossError& e) {
    EXPECT_EQ(e.iteration, 0u);
    ASSERT_EQ(e.loss_history.size(), 1u);
  }
}

TEST(Train, ClaytonBeatsIndependence) {
  const auto& res = clayton_fit();
  const Matrix& u = clayton_training_data();
  const Matrix gen = gmmn::sample_paths_pseudo(res.model, 10000, 1, 5).flatten();
  const Matrix ind = random_matrix(10000, 2, 6);
  EXPECT_LT(gmmn::mmd2(u, gen, res.model.bandwidths), gmmn::mmd2(u, ind, res.model.bandwidths));
}

TEST(Train, LossHalvesOverTraining) {
  const auto& losses = clayton_fit().epoch_losses;
  ASSERT_EQ(losses.size(), 300u);
  EXPECT_LE(losses.back(), 0.5 * losses.front());
}

TEST(Train, ClaytonSampleTau) {
  const Matrix gen = gmmn::sample_paths_pseudo(clayton_fit().model, 10000, 1, 7).flatten();
  EXPECT_NEAR(stats::kendall_tau(gen, 0, 1), 0.5, 0.05);
}

TEST(Train, QuasiReducesVarianceOfProductMean) {
  const auto& m = clayton_fit().model;
  std::vector<double> quasi, pseudo;
  for (std::uint64_t r = 0; r < 25; ++r) {
    quasi.push_back(gmmn::sample_paths_quasi(m, 4096, 1, derive_seed(1, r)).flatten().rowwise().prod().mean());
    pseudo.push_back(gmmn::sample_paths_pseudo(m, 4096, 1, derive_seed(2, r)).flatten().rowwise().prod().mean());
  }
  EXPECT_GE(stats::variance(pseudo) / stats::variance(quasi), 3.0);
}

TEST(Train, IndependentTarget) {
  const Matrix u = stats::pseudo_observations(random_matrix(2000, 2, 31));
  const auto res = gmmn::train(u, gmmn::TrainConfig{}, 8);
  const Matrix gen = gmmn::sample_paths_pseudo(res.model, 2000, 1, 9).flatten();
  for (Eigen::Index j = 0; j < 2; ++j)
    EXPECT_LT(stats::ks_uniform_statistic(stats::column(gen, j)), stats::ks_critical_value(2000, 0.05)) << j;
  EXPECT_NEAR(stats::kendall_tau(gen, 0, 1), 0.0, 0.05);
}
