#pragma once

// Experiment orchestration shared by the command-line tool and the
// acceptance tests: configuration, dependence models, synthetic data and the
// goodness-of-fit, pricing and forecasting studies.

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/copulas.hpp"
#include "gmmnqmc/garch.hpp"
#include "gmmnqmc/gbm.hpp"
#include "gmmnqmc/gmmn.hpp"
#include "gmmnqmc/io.hpp"
#include "gmmnqmc/lsm.hpp"
#include "gmmnqmc/qmc.hpp"
#include "gmmnqmc/scoring.hpp"
#include "gmmnqmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace gmmnqmc::pipeline {

using json = io::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct Config {
  std::string pipeline = "price";
  std::vector<std::string> models{"independence", "clayton", "normal", "t", "gmmn"};
  std::vector<std::string> sampling{"pseudo", "quasi"};
  /// Price CSV (date,<ticker>,...).
  std::string data;
  /// Optional CSV of copula samples used directly as training data by gof.
  std::string uniforms;
  /// Margin model used by gof to obtain training pseudo-observations: gbm or garch.
  std::string margins = "gbm";
  /// Last training date (inclusive). Empty: use n_trn, or all rows when n_trn is 0.
  std::string train_end;
  /// Training innovations (returns) when train_end is empty.
  std::size_t n_trn = 0;
  std::size_t n_pth = 10000;
  std::size_t n_gen = 5000;
  std::size_t n_rep = 25;
  /// Risk-free rate per grid step.
  double rate = 0.0;
  /// basket101, basket101-unrounded or fixed.
  std::string strike_rule = "basket101";
  double strike = 0.0;
  std::vector<std::size_t> maturities{10, 50, 100};
  /// normalized (basket divided by its initial value) or raw.
  std::string basis = "normalized";
  bool itm_only = false;
  std::vector<std::size_t> horizons{1, 5, 10};
  double variogram_order = 0.25;
  /// Returns are return_scale * log(P_k / P_{k-1}).
  double return_scale = 100.0;
  std::size_t garch_burn_in = 10;
  /// pit (fitted t CDF) or ranks.
  std::string garch_uniforms = "pit";
  double ci_level = 0.95;
  std::uint64_t seed = 20190101;
  gmmn::TrainConfig gmmn;
  copulas::FitOptions copula;
};

inline json to_json(const Config& c) {
  json j;
  j["pipeline"] = c.pipeline;
  j["models"] = c.models;
  j["sampling"] = c.sampling;
  j["data"] = c.data;
  j["uniforms"] = c.uniforms;
  j["margins"] = c.margins;
  j["train_end"] = c.train_end;
  j["n_trn"] = c.n_trn;
  j["n_pth"] = c.n_pth;
  j["n_gen"] = c.n_gen;
  j["n_rep"] = c.n_rep;
  j["rate"] = c.rate;
  j["strike_rule"] = c.strike_rule;
  j["strike"] = c.strike;
  j["maturities"] = c.maturities;
  j["basis"] = c.basis;
  j["itm_only"] = c.itm_only;
  j["horizons"] = c.horizons;
  j["variogram_order"] = c.variogram_order;
  j["return_scale"] = c.return_scale;
  j["garch_burn_in"] = c.garch_burn_in;
  j["garch_uniforms"] = c.garch_uniforms;
  j["ci_level"] = c.ci_level;
  j["seed"] = c.seed;
  j["gmmn"] = {{"hidden", c.gmmn.hidden},           {"batch_size", c.gmmn.batch_size},
               {"epochs", c.gmmn.epochs},           {"learning_rate", c.gmmn.learning_rate},
               {"beta1", c.gmmn.beta1},             {"beta2", c.gmmn.beta2},
               {"adam_eps", c.gmmn.adam_eps},       {"n_gen", c.gmmn.n_gen},
               {"dropout", c.gmmn.dropout_rate},    {"bandwidths", c.gmmn.bandwidths}};
  j["copula"] = {{"nu_grid", c.copula.nu_grid}, {"max_sweeps", c.copula.max_sweeps}, {"sweep_tol", c.copula.sweep_tol}};
  return j;
}

namespace detail {

template <class T>
void read_key(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void validate(const Config& c) {
  static const std::set<std::string> kModels{"independence", "clayton", "normal", "t", "gmmn"};
  static const std::set<std::string> kPipelines{"gof", "price", "forecast"};
  if (!kPipelines.count(c.pipeline)) throw DomainError("config: unknown pipeline '" + c.pipeline + "'");
  if (c.models.empty()) throw DomainError("config: model list is empty");
  for (const auto& m : c.models)
    if (!kModels.count(m)) throw DomainError("config: unknown model '" + m + "'");
  if (c.sampling.empty()) throw DomainError("config: sampling list is empty");
  for (const auto& s : c.sampling) qmc::parse_sampling(s);
  if (c.n_pth == 0 || c.n_gen == 0 || c.n_rep == 0) throw DomainError("config: counts must be positive");
  if (c.maturities.empty() || c.horizons.empty()) throw DomainError("config: maturities and horizons must be nonempty");
  for (auto t : c.maturities)
    if (t == 0) throw DomainError("config: maturities must be positive");
  for (auto h : c.horizons)
    if (h == 0) throw DomainError("config: horizons must be positive");
  if (c.strike_rule != "basket101" && c.strike_rule != "basket101-unrounded" && c.strike_rule != "fixed")
    throw DomainError("config: strike_rule must be basket101, basket101-unrounded or fixed");
  if (c.strike_rule == "fixed" && !(c.strike > 0.0)) throw DomainError("config: fixed strike must be positive");
  if (c.basis != "normalized" && c.basis != "raw") throw DomainError("config: basis must be normalized or raw");
  if (c.margins != "gbm" && c.margins != "garch") throw DomainError("config: margins must be gbm or garch");
  if (c.garch_uniforms != "pit" && c.garch_uniforms != "ranks") throw DomainError("config: garch_uniforms must be pit or ranks");
  if (!(c.variogram_order > 0.0)) throw DomainError("config: variogram_order must be positive");
  if (!(c.ci_level > 0.0 && c.ci_level < 1.0)) throw DomainError("config: ci_level must lie in (0,1)");
  if (c.gmmn.batch_size == 0 || c.gmmn.epochs == 0) throw DomainError("config: gmmn batch_size and epochs must be positive");
}

/// Applies the keys present in j on top of c. Unknown keys are rejected.
inline Config merge(Config c, const json& j) {
  static const std::set<std::string> kKeys{
      "pipeline", "models", "sampling", "data", "uniforms", "margins", "train_end", "n_trn", "n_pth", "n_gen",
      "n_rep", "rate", "strike_rule", "strike", "maturities", "basis", "itm_only", "horizons", "variogram_order",
      "return_scale", "garch_burn_in", "garch_uniforms", "ci_level", "seed", "gmmn", "copula"};
  if (!j.is_object()) throw ParseError("config: top level must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!kKeys.count(k)) throw ParseError("config: unknown key '" + k + "'");
  try {
    using detail::read_key;
    read_key(j, "pipeline", c.pipeline);
    read_key(j, "models", c.models);
    read_key(j, "sampling", c.sampling);
    read_key(j, "data", c.data);
    read_key(j, "uniforms", c.uniforms);
    read_key(j, "margins", c.margins);
    read_key(j, "train_end", c.train_end);
    read_key(j, "n_trn", c.n_trn);
    read_key(j, "n_pth", c.n_pth);
    read_key(j, "n_gen", c.n_gen);
    read_key(j, "n_rep", c.n_rep);
    read_key(j, "rate", c.rate);
    read_key(j, "strike_rule", c.strike_rule);
    read_key(j, "strike", c.strike);
    read_key(j, "maturities", c.maturities);
    read_key(j, "basis", c.basis);
    read_key(j, "itm_only", c.itm_only);
    read_key(j, "horizons", c.horizons);
    read_key(j, "variogram_order", c.variogram_order);
    read_key(j, "return_scale", c.return_scale);
    read_key(j, "garch_burn_in", c.garch_burn_in);
    read_key(j, "garch_uniforms", c.garch_uniforms);
    read_key(j, "ci_level", c.ci_level);
    read_key(j, "seed", c.seed);
    if (j.contains("gmmn")) {
      const auto& g = j.at("gmmn");
      read_key(g, "hidden", c.gmmn.hidden);
      read_key(g, "batch_size", c.gmmn.batch_size);
      read_key(g, "epochs", c.gmmn.epochs);
      read_key(g, "learning_rate", c.gmmn.learning_rate);
      read_key(g, "beta1", c.gmmn.beta1);
      read_key(g, "beta2", c.gmmn.beta2);
      read_key(g, "adam_eps", c.gmmn.adam_eps);
      read_key(g, "n_gen", c.gmmn.n_gen);
      read_key(g, "dropout", c.gmmn.dropout_rate);
      read_key(g, "bandwidths", c.gmmn.bandwidths);
    }
    if (j.contains("copula")) {
      const auto& g = j.at("copula");
      read_key(g, "nu_grid", c.copula.nu_grid);
      read_key(g, "max_sweeps", c.copula.max_sweeps);
      read_key(g, "sweep_tol", c.copula.sweep_tol);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

/// Hash of the canonical configuration; the data file content is not included.
inline std::string config_hash(const Config& c) { return io::hex64(io::fnv1a(to_json(c).dump())); }

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct Report {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write(std::ostream& out) const {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
      out << '\n';
    }
  }
  std::string str() const {
    std::ostringstream s;
    write(s);
    return s.str();
  }
};

inline std::string fmt(double v) { return io::format_double(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }

// ---------------------------------------------------------------------------
// Dependence models
// ---------------------------------------------------------------------------

class DependenceModel {
 public:
  DependenceModel(std::string name, copulas::CopulaSpec c) : name_(std::move(name)), impl_(std::move(c)) {}
  DependenceModel(std::string name, gmmn::GmmnModel g) : name_(std::move(name)), impl_(std::move(g)) {}

  const std::string& name() const { return name_; }
  bool is_gmmn() const { return std::holds_alternative<gmmn::GmmnModel>(impl_); }
  const gmmn::GmmnModel& network() const { return std::get<gmmn::GmmnModel>(impl_); }
  const copulas::CopulaSpec& copula() const { return std::get<copulas::CopulaSpec>(impl_); }

  std::size_t dim() const { return is_gmmn() ? network().dim() : copulas::dim(copula()); }

  /// n_pth x n_gen x d copula samples. Quasi sampling uses one randomized
  /// Sobol' set whose dimension is n_gen times the uniforms needed per step.
  PathCube sample_paths(qmc::Sampling kind, std::size_t n_pth, std::size_t n_gen, std::uint64_t seed) const {
    if (is_gmmn()) return gmmn::sample_paths(network(), kind, n_pth, n_gen, seed);
    const auto& spec = copula();
    const std::size_t w = copulas::uniform_width(spec);
    const PathCube u = qmc::uniform_cube(kind, n_pth, n_gen, w, seed);
    return PathCube::from_rows(copulas::sample(spec, u.flatten()), n_pth, n_gen);
  }

  /// n x d samples of a single step.
  Matrix sample(qmc::Sampling kind, std::size_t n, std::uint64_t seed) const { return sample_paths(kind, n, 1, seed).flatten(); }

  json to_json() const { return is_gmmn() ? io::to_json(network()) : io::to_json(copula()); }

  static DependenceModel from_json(const json& j) {
    if (j.value("type", std::string()) == "gmmn") return {"gmmn", io::gmmn_from_json(j)};
    auto spec = io::copula_from_json(j);
    return {copulas::to_string(copulas::family(spec)), std::move(spec)};
  }

 private:
  std::string name_;
  std::variant<copulas::CopulaSpec, gmmn::GmmnModel> impl_;
};

/// Fits (copulas, by maximum pseudo-likelihood) or trains (GMMN) one model on u.
inline DependenceModel fit_dependence(const std::string& name, const Matrix& u, const Config& cfg, std::uint64_t seed) {
  if (name == "gmmn") return {name, gmmn::train(u, cfg.gmmn, seed).model};
  return {name, copulas::fit_mpl(copulas::parse_family(name), u, cfg.copula)};
}

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

/// Price rows in the training window: through train_end, else n_trn + 1, else all.
inline std::size_t training_rows(const Config& cfg, const io::PriceTable& t) {
  std::size_t rows = t.dates.size();
  if (!cfg.train_end.empty()) rows = io::rows_through(t, cfg.train_end);
  else if (cfg.n_trn > 0) rows = cfg.n_trn + 1;
  if (rows > t.dates.size()) throw DomainError("training window exceeds the data (" + std::to_string(rows) + " rows requested)");
  if (rows < 3) throw DomainError("training window holds fewer than 3 prices");
  return rows;
}

inline Matrix log_returns(const Matrix& prices, double scale) {
  Matrix r(prices.rows() - 1, prices.cols());
  for (Eigen::Index k = 1; k < prices.rows(); ++k)
    for (Eigen::Index j = 0; j < prices.cols(); ++j) r(k - 1, j) = scale * std::log(prices(k, j) / prices(k - 1, j));
  return r;
}

/// Training pseudo-observations via deBrowning and ranks.
inline Matrix gbm_training_uniforms(const Matrix& train_prices, double rate) {
  return stats::pseudo_observations(gbm::estimate(train_prices, rate).innovations);
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SynthGbm {
  std::size_t d = 3;
  std::size_t rows = 1001;
  double sigma = 0.2 / std::sqrt(250.0);
  double rate = 0.0;
  double x0 = 100.0;
  /// Dependence of the innovations.
  copulas::CopulaSpec copula = copulas::StudentT{copulas::equicorrelation(3, 0.5), 4.0};
  std::uint64_t seed = 1;
};

/// GBM prices whose N(0,1) increments are coupled by the given copula.
inline io::PriceTable synth_gbm(const SynthGbm& s) {
  if (s.rows < 2) throw DomainError("synth_gbm: need at least 2 rows");
  if (copulas::dim(s.copula) != s.d) throw DimensionError("synth_gbm: copula dimension differs from d");
  const std::size_t n = s.rows - 1;
  const Matrix u = qmc::pseudo_uniforms(n, copulas::uniform_width(s.copula), s.seed).points();
  const Matrix c = copulas::sample(s.copula, u);
  PathCube z(1, n, s.d);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < s.d; ++j) z(0, k, j) = stats::normal_quantile(c(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
  gbm::GbmModel m{s.rate, Vector::Constant(static_cast<Eigen::Index>(s.d), s.sigma), Vector::Constant(static_cast<Eigen::Index>(s.d), s.x0), gbm::uniform_grid(n)};
  const PathCube x = gbm::simulate(m, z);
  io::PriceTable t;
  t.dates = io::synthetic_dates(s.rows);
  for (std::size_t j = 0; j < s.d; ++j) t.tickers.push_back("S" + std::to_string(j + 1));
  t.prices.resize(static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.d));
  t.prices.row(0).setConstant(s.x0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < s.d; ++j) t.prices(static_cast<Eigen::Index>(k + 1), static_cast<Eigen::Index>(j)) = x(0, k, j);
  return t;
}

struct SynthGarch {
  std::size_t d = 3;
  std::size_t rows = 2001;
  garch::MarginParams params{0.0, 0.5, -0.3, 0.05, 0.05, 0.9, 6.0};
  copulas::CopulaSpec copula = copulas::Clayton{3, 2.0};
  double return_scale = 100.0;
  double x0 = 100.0;
  std::size_t burn_in = 200;
  std::uint64_t seed = 1;
};

struct SynthGarchData {
  io::PriceTable table;
  /// Returns that generated the prices, rows - 1 x d.
  Matrix returns;
  /// Standardized innovations behind the returns.
  Matrix innovations;
};

/// ARMA-GARCH returns with copula-coupled scaled-t innovations, converted to
/// prices by P_k = P_{k-1} exp(X_k / return_scale).
inline SynthGarchData synth_garch(const SynthGarch& s) {
  if (s.rows < 2) throw DomainError("synth_garch: need at least 2 rows");
  if (copulas::dim(s.copula) != s.d) throw DimensionError("synth_garch: copula dimension differs from d");
  if (!garch::is_stationary(s.params)) throw DomainError("synth_garch: parameters are not stationary");
  const std::size_t n = s.rows - 1, total = n + s.burn_in;
  const Matrix u = copulas::sample(s.copula, qmc::pseudo_uniforms(total, copulas::uniform_width(s.copula), s.seed).points());
  Matrix z(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.size(); ++i) z.data()[i] = stats::scaled_t_quantile(u.data()[i], s.params.nu);
  const double v0 = s.params.omega / (1.0 - s.params.alpha - s.params.beta);
  const std::vector<garch::MarginParams> params(s.d, s.params);
  const std::vector<garch::MarginState> s0(s.d, garch::MarginState{s.params.mu, s.params.mu, v0});
  const Matrix x = garch::simulate(params, s0, z);

  SynthGarchData out;
  out.returns = x.bottomRows(static_cast<Eigen::Index>(n));
  out.innovations = z.bottomRows(static_cast<Eigen::Index>(n));
  auto& t = out.table;
  t.dates = io::synthetic_dates(s.rows);
  for (std::size_t j = 0; j < s.d; ++j) t.tickers.push_back("X" + std::to_string(j + 1));
  t.prices.resize(static_cast<Eigen::Index>(s.rows), static_cast<Eigen::Index>(s.d));
  t.prices.row(0).setConstant(s.x0);
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(n); ++k)
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(s.d); ++j)
      t.prices(k + 1, j) = t.prices(k, j) * std::exp(out.returns(k, j) / s.return_scale);
  return out;
}

// ---------------------------------------------------------------------------
// Studies
// ---------------------------------------------------------------------------

struct FittedModels {
  Matrix training;
  std::vector<DependenceModel> models;
};

inline FittedModels fit_models(const Config& cfg, const Matrix& u_trn) {
  FittedModels f{u_trn, {}};
  for (std::size_t m = 0; m < cfg.models.size(); ++m)
    f.models.push_back(fit_dependence(cfg.models[m], u_trn, cfg, derive_seed(cfg.seed, 1000 + m)));
  return f;
}

/// Seed of replication `rep` within the cell identified by `cell`.
inline std::uint64_t replication_seed(std::uint64_t master, const std::string& cell, std::size_t rep) {
  return derive_seed(derive_seed(master, rep), io::fnv1a(cell));
}

struct StudyResult {
  Report detail;
  Report summary;
  std::vector<DependenceModel> models;
  std::vector<std::string> warnings;
};

/// Training uniforms for gof according to cfg (explicit samples, or margins removed from prices).
inline Matrix gof_training_uniforms(const Config& cfg, const io::PriceTable* table, const Matrix* samples) {
  if (samples) return stats::pseudo_observations(*samples);
  if (!table) throw DomainError("run_gof: no data");
  const std::size_t rows = training_rows(cfg, *table);
  const Matrix p = table->prices.topRows(static_cast<Eigen::Index>(rows));
  if (cfg.margins == "gbm") return gbm_training_uniforms(p, cfg.rate);
  garch::FitOptions go;
  go.burn_in = cfg.garch_burn_in;
  go.rank_uniforms = cfg.garch_uniforms == "ranks";
  return garch::fit(log_returns(p, cfg.return_scale), go).uniforms;
}

/// Fits each model once, then computes the Cramer-von Mises statistic between
/// the training pseudo-observations and pseudo-observations of n_gen generated
/// samples, n_rep times per model and sampling kind.
inline StudyResult run_gof(const Config& cfg, const Matrix& u_trn) {
  validate(cfg);
  const std::string hash = config_hash(cfg);
  StudyResult res;
  res.models = fit_models(cfg, u_trn).models;
  const double aa = stats::empirical_copula_inner(u_trn, u_trn);
  res.detail.header = {"model", "sampling_kind", "rep", "n_trn", "n_gen", "S", "seed", "config_hash"};
  res.summary.header = {"model", "sampling_kind", "n_rep", "median_S", "config_hash"};
  for (const auto& model : res.models)
    for (const auto& sname : cfg.sampling) {
      const auto kind = qmc::parse_sampling(sname);
      std::vector<double> s(cfg.n_rep);
      std::vector<std::uint64_t> seeds(cfg.n_rep);
      for (std::size_t rep = 0; rep < cfg.n_rep; ++rep) {
        seeds[rep] = replication_seed(cfg.seed, "gof|" + model.name() + "|" + sname, rep);
        const Matrix gen = stats::pseudo_observations(model.sample(kind, cfg.n_gen, seeds[rep]));
        s[rep] = stats::cvm_statistic(u_trn, gen, aa);
        res.detail.rows.push_back({model.name(), sname, fmt(rep), fmt(static_cast<std::size_t>(u_trn.rows())), fmt(cfg.n_gen),
                                   fmt(s[rep]), std::to_string(seeds[rep]), hash});
      }
      std::vector<double> sorted = s;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t h = sorted.size() / 2;
      const double median = sorted.size() % 2 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);
      res.summary.rows.push_back({model.name(), sname, fmt(cfg.n_rep), fmt(median), hash});
    }
  return res;
}

inline double strike_for(const Config& cfg, std::span<const double> last) {
  if (cfg.strike_rule == "fixed") return cfg.strike;
  return lsm::strike_from_basket(last, cfg.strike_rule == "basket101");
}

/// Option pricing study: deBrowning on the training window, dependence fits,
/// dependent GBM paths from the last training prices, least-squares Monte Carlo.
inline StudyResult run_price(const Config& cfg, const io::PriceTable& table) {
  validate(cfg);
  const std::string hash = config_hash(cfg);
  const std::size_t rows = training_rows(cfg, table);
  const Matrix train = table.prices.topRows(static_cast<Eigen::Index>(rows));
  const auto est = gbm::estimate(train, cfg.rate);
  const Matrix u_trn = stats::pseudo_observations(est.innovations);

  StudyResult res;
  res.models = fit_models(cfg, u_trn).models;
  const std::vector<double> x0(est.model.x0.data(), est.model.x0.data() + est.model.x0.size());
  const double strike = strike_for(cfg, x0);
  const double basket0 = std::accumulate(x0.begin(), x0.end(), 0.0) / static_cast<double>(x0.size());
  const std::size_t d = x0.size();

  res.detail.header = {"dependence_model", "sampling_kind", "d", "K", "T", "n_pth", "rep", "price", "std_error", "seed", "config_hash"};
  res.summary.header = {"dependence_model", "sampling_kind", "T", "n_rep", "mean_price", "ci_lo", "ci_hi", "vrf", "config_hash"};
  for (const auto& model : res.models)
    for (auto T : cfg.maturities) {
      gbm::GbmModel g = est.model;
      g.grid = gbm::uniform_grid(T);
      lsm::OptionSpec opt{strike, cfg.rate, g.grid, cfg.basis == "normalized" ? basket0 : 1.0, cfg.itm_only};
      std::map<std::string, scoring::ReplicationSet> sets;
      for (const auto& sname : cfg.sampling) {
        const auto kind = qmc::parse_sampling(sname);
        auto& set = sets[sname];
        set.label = model.name() + "/" + sname + "/T=" + std::to_string(T);
        for (std::size_t rep = 0; rep < cfg.n_rep; ++rep) {
          const auto seed = replication_seed(cfg.seed, "price|" + model.name() + "|" + sname + "|" + std::to_string(T), rep);
          const PathCube z = gbm::normal_increments(model.sample_paths(kind, cfg.n_pth, T, seed));
          const auto pr = lsm::price_american(gbm::simulate(g, z), opt);
          set.values.push_back(pr.price);
          res.detail.rows.push_back({model.name(), sname, fmt(d), fmt(strike), fmt(T), fmt(cfg.n_pth), fmt(rep), fmt(pr.price),
                                     fmt(pr.std_error), std::to_string(seed), hash});
        }
      }
      std::string vrf = "";
      if (sets.count("pseudo") && sets.count("quasi") && cfg.n_rep >= 2) {
        const auto v = scoring::variance_reduction_factor(sets["pseudo"], sets["quasi"]);
        if (v.infinite) res.warnings.push_back(model.name() + " T=" + std::to_string(T) + ": quasi variance is zero; VRF reported as inf");
        vrf = v.infinite ? "inf" : fmt(v.factor);
      }
      for (const auto& sname : cfg.sampling) {
        const auto& set = sets[sname];
        std::string lo = "", hi = "";
        if (set.values.size() >= 2) {
          const auto ci = scoring::wald_ci(set, cfg.ci_level);
          lo = fmt(ci.first);
          hi = fmt(ci.second);
        }
        res.summary.rows.push_back({model.name(), sname, fmt(T), fmt(cfg.n_rep), fmt(stats::mean(set.values)), lo, hi,
                                    sname == "quasi" ? vrf : "", hash});
      }
    }
  return res;
}

struct ForecastSetup {
  Matrix returns;
  std::size_t n_trn = 0;
  garch::FitResult fit;
};

/// Returns, training size and the ARMA-GARCH fit on the training window only.
inline ForecastSetup prepare_forecast(const Config& cfg, const io::PriceTable& table) {
  ForecastSetup s;
  s.returns = log_returns(table.prices, cfg.return_scale);
  s.n_trn = training_rows(cfg, table) - 1;
  garch::FitOptions go;
  go.burn_in = cfg.garch_burn_in;
  go.rank_uniforms = cfg.garch_uniforms == "ranks";
  s.fit = garch::fit(s.returns.topRows(static_cast<Eigen::Index>(s.n_trn)), go);
  return s;
}

/// Rolling-origin forecasts over the test window. The EPD for X at index o+h
/// conditions on returns through index o; the window runs over origins
/// o = n_trn-1 .. n_all-1-h (zero-based indices into the return series).
inline StudyResult run_forecast(const Config& cfg, const io::PriceTable& table) {
  validate(cfg);
  const std::string hash = config_hash(cfg);
  const ForecastSetup setup = prepare_forecast(cfg, table);
  const Matrix& x = setup.returns;
  const std::size_t n_all = static_cast<std::size_t>(x.rows()), n_trn = setup.n_trn;
  const std::size_t h_max = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
  if (n_trn + h_max > n_all) throw DomainError("run_forecast: test window is shorter than the largest horizon");

  StudyResult res;
  res.models = fit_models(cfg, setup.fit.uniforms).models;
  res.warnings = setup.fit.warnings;

  // Filtered states at every origin; parameters stay at their training values.
  const std::size_t n_origin = n_all - n_trn;
  std::vector<garch::ArmaGarchModel> at(n_origin, setup.fit.model);
  for (std::size_t o = 1; o < n_origin; ++o) {
    at[o].state = garch::filter(at[o - 1], x.middleRows(static_cast<Eigen::Index>(n_trn + o - 1), 1));
  }
  const garch::Forecaster forecaster(setup.fit.model);

  res.detail.header = {"model", "sampling_kind", "h", "r", "AVS", "replication_id", "seed", "n_windows", "config_hash"};
  res.summary.header = {"model", "sampling_kind", "h", "n_rep", "median_AVS", "sd_AVS", "config_hash"};
  for (const auto& model : res.models)
    for (const auto& sname : cfg.sampling) {
      const auto kind = qmc::parse_sampling(sname);
      std::map<std::size_t, std::vector<double>> avs;
      std::vector<std::uint64_t> seeds(cfg.n_rep);
      for (std::size_t rep = 0; rep < cfg.n_rep; ++rep) {
        seeds[rep] = replication_seed(cfg.seed, "forecast|" + model.name() + "|" + sname, rep);
        std::map<std::size_t, double> total;
        std::map<std::size_t, std::size_t> count;
        std::vector<double> r(static_cast<std::size_t>(x.cols()));
        for (std::size_t o = 0; o < n_origin; ++o) {
          // Origin index n_trn-1+o; the last admissible target index is n_all-1.
          const std::size_t h_here = std::min(h_max, n_origin - o);
          const PathCube u = model.sample_paths(kind, cfg.n_pth, h_here, derive_seed(seeds[rep], o));
          const auto epds = forecaster(at[o].state, u, h_here, n_trn - 1 + o);
          for (auto h : cfg.horizons) {
            if (h > h_here) continue;
            for (Eigen::Index j = 0; j < x.cols(); ++j) r[static_cast<std::size_t>(j)] = x(static_cast<Eigen::Index>(n_trn - 1 + o + h), j);
            total[h] += scoring::variogram_score(r, epds[h - 1], cfg.variogram_order);
            ++count[h];
          }
        }
        for (auto h : cfg.horizons) {
          if (!count[h]) throw DomainError("run_forecast: empty test window for h=" + std::to_string(h));
          const double a = total[h] / static_cast<double>(count[h]);
          avs[h].push_back(a);
          res.detail.rows.push_back({model.name(), sname, fmt(h), fmt(cfg.variogram_order), fmt(a), fmt(rep),
                                     std::to_string(seeds[rep]), fmt(count[h]), hash});
        }
      }
      for (auto h : cfg.horizons) {
        std::vector<double> v = avs[h];
        std::sort(v.begin(), v.end());
        const std::size_t m = v.size() / 2;
        const double median = v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
        res.summary.rows.push_back({model.name(), sname, fmt(h), fmt(cfg.n_rep), fmt(median),
                                    v.size() >= 2 ? fmt(stats::stddev(avs[h])) : "", hash});
      }
    }
  return res;
}

}  // namespace gmmnqmc::pipeline
