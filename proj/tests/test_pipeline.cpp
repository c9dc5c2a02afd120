#include "gmmnqmc/pipeline.hpp"

#include <gtest/gtest.h>

using namespace gmmnqmc;
using pipeline::Config;

namespace {

Config cheap_price_config() {
  Config c;
  c.pipeline = "price";
  c.models = {"independence", "t"};
  c.n_pth = 1000;
  c.n_rep = 4;
  c.maturities = {5};
  c.rate = 0.0005;
  c.seed = 5;
  return c;
}

std::size_t column(const pipeline::Report& r, const std::string& name) {
  const auto it = std::find(r.header.begin(), r.header.end(), name);
  if (it == r.header.end()) throw std::runtime_error("no column " + name);
  return static_cast<std::size_t>(it - r.header.begin());
}

}  // namespace

TEST(Config, DefaultsValidateAndRoundTrip) {
  const Config c;
  EXPECT_NO_THROW(pipeline::validate(c));
  const Config back = pipeline::merge(Config{}, pipeline::to_json(c));
  EXPECT_EQ(pipeline::to_json(back), pipeline::to_json(c));
  EXPECT_EQ(c.variogram_order, 0.25);
  EXPECT_EQ(c.gmmn.hidden, std::vector<std::size_t>{300});
}

TEST(Config, MergeOverridesOnlyPresentKeys) {
  const auto c = pipeline::merge(Config{}, nlohmann::json::parse(R"({"n_rep": 7, "gmmn": {"epochs": 3}, "models": ["t"]})"));
  EXPECT_EQ(c.n_rep, 7u);
  EXPECT_EQ(c.gmmn.epochs, 3u);
  EXPECT_EQ(c.gmmn.batch_size, Config{}.gmmn.batch_size);
  EXPECT_EQ(c.models, std::vector<std::string>{"t"});
  EXPECT_EQ(c.n_pth, Config{}.n_pth);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(pipeline::merge(Config{}, nlohmann::json::parse(R"({"n_reps": 3})")), ParseError);
  EXPECT_THROW(pipeline::merge(Config{}, nlohmann::json::parse(R"({"n_rep": "three"})")), ParseError);
  EXPECT_THROW(pipeline::merge(Config{}, nlohmann::json::parse("[1]")), ParseError);
  Config c;
  c.models = {"gumbel"};
  EXPECT_THROW(pipeline::validate(c), DomainError);
  c = Config{};
  c.sampling = {"sobol"};
  EXPECT_THROW(pipeline::validate(c), Error);
  c = Config{};
  c.n_rep = 0;
  EXPECT_THROW(pipeline::validate(c), DomainError);
  c = Config{};
  c.strike_rule = "fixed";
  EXPECT_THROW(pipeline::validate(c), DomainError);
}

TEST(Config, HashTracksContent) {
  Config a, b;
  EXPECT_EQ(pipeline::config_hash(a), pipeline::config_hash(b));
  b.seed += 1;
  EXPECT_NE(pipeline::config_hash(a), pipeline::config_hash(b));
  EXPECT_EQ(pipeline::config_hash(a).size(), 16u);
}

TEST(Seeds, ReplicationSeedsAreDistinctAcrossCellsAndReps) {
  std::set<std::uint64_t> seen;
  for (const char* cell : {"a", "b", "c"})
    for (std::size_t r = 0; r < 50; ++r) seen.insert(pipeline::replication_seed(9, cell, r));
  EXPECT_EQ(seen.size(), 150u);
  EXPECT_EQ(pipeline::replication_seed(9, "a", 3), pipeline::replication_seed(9, "a", 3));
}

TEST(TrainingWindow, BoundaryRules) {
  pipeline::SynthGbm s;
  s.rows = 40;
  const auto t = pipeline::synth_gbm(s);
  Config c;
  EXPECT_EQ(pipeline::training_rows(c, t), 40u);
  c.n_trn = 20;
  EXPECT_EQ(pipeline::training_rows(c, t), 21u);
  c.train_end = t.dates[9];
  EXPECT_EQ(pipeline::training_rows(c, t), 10u);
  c.train_end = "1990-01-01";
  EXPECT_THROW(pipeline::training_rows(c, t), DomainError);
  c.train_end.clear();
  c.n_trn = 40;
  EXPECT_THROW(pipeline::training_rows(c, t), DomainError);
}

TEST(TrainingWindow, EstimationIgnoresPostBoundaryData) {
  pipeline::SynthGbm s;
  s.rows = 300;
  auto t = pipeline::synth_gbm(s);
  Config c = cheap_price_config();
  c.n_rep = 2;
  c.train_end = t.dates[199];
  const auto before = pipeline::run_price(c, t);
  t.prices.bottomRows(100) *= 3.0;
  t.prices(250, 1) = 1e-3;
  const auto after = pipeline::run_price(c, t);
  EXPECT_EQ(before.detail.str(), after.detail.str());

  pipeline::SynthGarch g;
  g.rows = 700;
  auto data = pipeline::synth_garch(g);
  Config f;
  f.n_trn = 500;
  const auto fit_a = pipeline::prepare_forecast(f, data.table);
  data.table.prices.bottomRows(150) *= 0.5;
  const auto fit_b = pipeline::prepare_forecast(f, data.table);
  EXPECT_EQ(io::to_json(fit_a.fit.model), io::to_json(fit_b.fit.model));
  EXPECT_EQ(fit_a.fit.uniforms, fit_b.fit.uniforms);
}

TEST(Gof, OneRowPerReplicationAndCell) {
  Config c;
  c.pipeline = "gof";
  c.models = {"independence", "clayton"};
  c.n_rep = 1;
  c.n_gen = 200;
  const Matrix u = qmc::pseudo_uniforms(300, 2, 3).points();
  const auto res = pipeline::run_gof(c, stats::pseudo_observations(u));
  EXPECT_EQ(res.detail.rows.size(), 4u);
  EXPECT_EQ(res.summary.rows.size(), 4u);
  const auto hash = pipeline::config_hash(c);
  for (const auto& row : res.detail.rows) {
    EXPECT_EQ(row[column(res.detail, "config_hash")], hash);
    EXPECT_FALSE(row[column(res.detail, "seed")].empty());
  }
}

TEST(Gof, IndependenceMatchesTwoSampleBaseline) {
  Config c;
  c.pipeline = "gof";
  c.models = {"independence"};
  c.sampling = {"pseudo"};
  c.n_rep = 21;
  c.n_gen = 500;
  const Matrix u = stats::pseudo_observations(qmc::pseudo_uniforms(500, 2, 11).points());
  const auto res = pipeline::run_gof(c, u);
  const double model_median = std::stod(res.summary.rows[0][column(res.summary, "median_S")]);
  std::vector<double> base;
  for (std::uint64_t r = 0; r < 21; ++r) {
    const Matrix a = stats::pseudo_observations(qmc::pseudo_uniforms(500, 2, derive_seed(12, r)).points());
    const Matrix b = stats::pseudo_observations(qmc::pseudo_uniforms(500, 2, derive_seed(13, r)).points());
    base.push_back(stats::cvm_statistic(a, b));
  }
  std::sort(base.begin(), base.end());
  EXPECT_GT(model_median, 0.33 * base[10]);
  EXPECT_LT(model_median, 3.0 * base[10]);
}

TEST(Price, DeterministicReports) {
  pipeline::SynthGbm s;
  s.rows = 200;
  const auto t = pipeline::synth_gbm(s);
  const Config c = cheap_price_config();
  const auto a = pipeline::run_price(c, t), b = pipeline::run_price(c, t);
  EXPECT_EQ(a.detail.str(), b.detail.str());
  EXPECT_EQ(a.summary.str(), b.summary.str());
  EXPECT_EQ(a.detail.rows.size(), 2u * 2u * 4u);
  EXPECT_EQ(a.summary.rows.size(), 4u);
  EXPECT_FALSE(a.summary.rows[1][column(a.summary, "vrf")].empty());
}

TEST(Price, TailDependenceRaisesBasketCallPrice) {
  pipeline::SynthGbm s;
  s.rows = 1001;
  s.seed = 21;
  const auto t = pipeline::synth_gbm(s);
  Config c = cheap_price_config();
  c.sampling = {"pseudo"};
  c.n_pth = 2000;
  c.n_rep = 8;
  c.maturities = {20};
  const auto res = pipeline::run_price(c, t);
  std::map<std::string, std::vector<double>> prices;
  for (const auto& row : res.detail.rows) prices[row[0]].push_back(std::stod(row[column(res.detail, "price")]));
  const auto& ind = prices["independence"];
  const auto& tc = prices["t"];
  const double se = std::sqrt(stats::variance(ind) / ind.size() + stats::variance(tc) / tc.size());
  EXPECT_GT(stats::mean(tc) - stats::mean(ind), 2.0 * se);
}

TEST(Forecast, RowsPerReplicationAndHorizon) {
  pipeline::SynthGarch g;
  g.rows = 560;
  const auto data = pipeline::synth_garch(g);
  Config c;
  c.pipeline = "forecast";
  c.models = {"independence", "normal"};
  c.n_trn = 500;
  c.n_pth = 50;
  c.n_rep = 2;
  c.horizons = {1, 5};
  const auto res = pipeline::run_forecast(c, data.table);
  EXPECT_EQ(res.detail.rows.size(), 2u * 2u * 2u * 2u);
  EXPECT_EQ(res.summary.rows.size(), 2u * 2u * 2u);
  for (const auto& row : res.detail.rows) {
    const auto h = std::stoul(row[column(res.detail, "h")]);
    EXPECT_EQ(std::stoul(row[column(res.detail, "n_windows")]), 59u - h + 1u);
    EXPECT_GT(std::stod(row[column(res.detail, "AVS")]), 0.0);
  }
  const auto again = pipeline::run_forecast(c, data.table);
  EXPECT_EQ(res.detail.str(), again.detail.str());
  c.horizons = {60};
  EXPECT_THROW(pipeline::run_forecast(c, data.table), DomainError);
}
