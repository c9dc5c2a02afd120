// gmmnqmc: command-line driver for the dependence-model pipelines.
//
// Settings are resolved as built-in defaults, then the JSON document given by
// --config, then individual command-line flags (highest precedence).

#include "gmmnqmc/pipeline.hpp"

#include <CLI11.hpp>
#include <boost/version.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace gmmnqmc;
using pipeline::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::size_t> split_counts(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& v : split_list(s)) out.push_back(static_cast<std::size_t>(std::stoull(v)));
  return out;
}

/// Flags shared by the study subcommands. Unset optionals leave the config untouched.
struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string models;
  std::string sampling;
  std::string data;
  std::string uniforms;
  std::string margins;
  std::string train_end;
  std::optional<std::size_t> n_trn, n_pth, n_gen, n_rep, epochs;
  std::optional<double> rate;
  std::string maturities, horizons;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--out", f.out, "Output directory")->capture_default_str();
  sub->add_option("--model", f.models, "Comma-separated models: independence,clayton,normal,t,gmmn");
  sub->add_option("--sampling", f.sampling, "pseudo, quasi, or pseudo,quasi");
  sub->add_option("--data", f.data, "Price CSV (date,<ticker>,...)");
}

void add_study(CLI::App* sub, Flags& f) {
  add_common(sub, f);
  sub->add_option("--uniforms", f.uniforms, "CSV of training copula samples (gof only)");
  sub->add_option("--margins", f.margins, "Margin model for gof training data: gbm or garch");
  sub->add_option("--train-end", f.train_end, "Last training date (inclusive, YYYY-MM-DD)");
  sub->add_option("--n-trn", f.n_trn, "Training innovations when no boundary date is given");
  sub->add_option("--n-pth", f.n_pth, "Paths per replication");
  sub->add_option("--n-gen", f.n_gen, "Generated samples per gof replication");
  sub->add_option("--n-rep", f.n_rep, "Replications");
  sub->add_option("--epochs", f.epochs, "GMMN training epochs");
  sub->add_option("--rate", f.rate, "Risk-free rate per time step");
  sub->add_option("--maturities", f.maturities, "Comma-separated maturities in steps");
  sub->add_option("--horizons", f.horizons, "Comma-separated forecast horizons");
}

pipeline::Config resolve(const Flags& f, const std::string& pipeline_name) {
  pipeline::Config c;
  c.pipeline = pipeline_name;
  if (!f.config_path.empty()) c = pipeline::merge(c, io::read_json(f.config_path));
  if (!pipeline_name.empty()) c.pipeline = pipeline_name;
  if (f.seed) c.seed = *f.seed;
  if (!f.models.empty()) c.models = split_list(f.models);
  if (!f.sampling.empty()) c.sampling = split_list(f.sampling);
  if (!f.data.empty()) c.data = f.data;
  if (!f.uniforms.empty()) c.uniforms = f.uniforms;
  if (!f.margins.empty()) c.margins = f.margins;
  if (!f.train_end.empty()) c.train_end = f.train_end;
  if (f.n_trn) c.n_trn = *f.n_trn;
  if (f.n_pth) c.n_pth = *f.n_pth;
  if (f.n_gen) c.n_gen = *f.n_gen;
  if (f.n_rep) c.n_rep = *f.n_rep;
  if (f.epochs) c.gmmn.epochs = *f.epochs;
  if (f.rate) c.rate = *f.rate;
  if (!f.maturities.empty()) c.maturities = split_counts(f.maturities);
  if (!f.horizons.empty()) c.horizons = split_counts(f.horizons);
  return c;
}

class Run {
 public:
  Run(std::string command, const std::string& out) : command_(std::move(command)), out_(out) { fs::create_directories(out_); }

  std::string path(const std::string& name) const { return (out_ / name).string(); }

  void write(const std::string& name, const std::string& text) {
    io::write_text(path(name), text);
    outputs_.push_back(name);
  }
  void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }
  void warn(const std::string& w) {
    std::cerr << "warning: " << w << "\n";
    warnings_.push_back(w);
  }

  void finish(const std::optional<pipeline::Config>& cfg, json extra = json::object()) {
    json m;
    m["command"] = command_;
    if (cfg) {
      m["config"] = pipeline::to_json(*cfg);
      m["config_hash"] = pipeline::config_hash(*cfg);
      m["seeds"] = {{"master", cfg->seed}, {"derivation", "derive_seed(derive_seed(master, rep), fnv1a(cell))"}};
    }
    m["versions"] = {{"gmmnqmc", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)},
                     {"boost", BOOST_LIB_VERSION},
                     {"compiler", __VERSION__}};
    m["outputs"] = outputs_;
    m["warnings"] = warnings_;
    for (auto& [k, v] : extra.items()) m[k] = v;
    io::write_text(path("manifest.json"), m.dump(2) + "\n");
    for (const auto& o : outputs_) std::cout << path(o) << "\n";
    std::cout << path("manifest.json") << "\n";
  }

 private:
  std::string command_;
  fs::path out_;
  std::vector<std::string> outputs_;
  std::vector<std::string> warnings_;
};

io::PriceTable load_table(const pipeline::Config& c) {
  if (c.data.empty()) throw DomainError("no price data given (use --data or the 'data' config key)");
  return io::ingest_csv(c.data);
}

Matrix training_uniforms(const pipeline::Config& c) {
  if (!c.uniforms.empty()) return stats::pseudo_observations(io::read_matrix_csv(c.uniforms));
  const auto table = load_table(c);
  return pipeline::gof_training_uniforms(c, &table, nullptr);
}

std::vector<std::string> column_names(const std::string& prefix, std::size_t d) {
  std::vector<std::string> h;
  for (std::size_t j = 0; j < d; ++j) h.push_back(prefix + std::to_string(j + 1));
  return h;
}

void emit_study(Run& run, const pipeline::StudyResult& res, const std::string& stem, const pipeline::Config& cfg) {
  run.write(stem + ".csv", res.detail.str());
  run.write(stem + "_summary.csv", res.summary.str());
  for (const auto& w : res.warnings) run.warn(w);
  for (const auto& m : res.models) run.write_json("model_" + m.name() + ".json", m.to_json());
  run.finish(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dependence models (GMMN and parametric copulas) with quasi-random sampling for option pricing and forecasting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Flags f;

  auto* ingest = app.add_subcommand("ingest", "Validate a price CSV and write a normalized copy");
  add_common(ingest, f);

  auto* synth = app.add_subcommand("synth", "Generate synthetic prices (GBM or ARMA-GARCH margins with copula innovations)");
  add_common(synth, f);
  std::string synth_kind = "gbm", synth_copula;
  std::size_t synth_d = 3, synth_rows = 0;
  double s_sigma = 0.2 / std::sqrt(250.0), s_rate = 0.0, s_x0 = 100.0, s_rho = 0.5, s_nu = 4.0, s_theta = 2.0;
  garch::MarginParams s_garch{0.0, 0.5, -0.3, 0.05, 0.05, 0.9, 6.0};
  synth->add_option("--kind", synth_kind, "gbm or garch")->check(CLI::IsMember({"gbm", "garch"}))->capture_default_str();
  synth->add_option("--d", synth_d, "Number of series")->capture_default_str();
  synth->add_option("--rows", synth_rows, "Price rows (default 5288 for gbm, 2001 for garch)");
  synth->add_option("--copula", synth_copula, "Innovation copula: independence, clayton, normal or t (default t for gbm, clayton for garch)");
  synth->add_option("--rho", s_rho, "Equicorrelation of normal/t copulas")->capture_default_str();
  synth->add_option("--nu", s_nu, "Degrees of freedom of the t copula")->capture_default_str();
  synth->add_option("--theta", s_theta, "Clayton parameter")->capture_default_str();
  synth->add_option("--sigma", s_sigma, "GBM volatility per step");
  synth->add_option("--rate", s_rate, "GBM drift rate per step")->capture_default_str();
  synth->add_option("--x0", s_x0, "Initial price")->capture_default_str();
  synth->add_option("--mu", s_garch.mu, "ARMA-GARCH mu")->capture_default_str();
  synth->add_option("--phi", s_garch.phi, "ARMA-GARCH phi")->capture_default_str();
  synth->add_option("--gamma", s_garch.gamma, "ARMA-GARCH gamma")->capture_default_str();
  synth->add_option("--omega", s_garch.omega, "ARMA-GARCH omega")->capture_default_str();
  synth->add_option("--alpha", s_garch.alpha, "ARMA-GARCH alpha")->capture_default_str();
  synth->add_option("--beta", s_garch.beta, "ARMA-GARCH beta")->capture_default_str();
  synth->add_option("--garch-nu", s_garch.nu, "Innovation degrees of freedom")->capture_default_str();

  auto* gof = app.add_subcommand("gof", "Goodness-of-fit study (Cramer-von Mises statistic per replication)");
  add_study(gof, f);
  auto* price = app.add_subcommand("price", "American basket call pricing study");
  add_study(price, f);
  auto* forecast = app.add_subcommand("forecast", "Rolling ARMA-GARCH forecasts scored by the average variogram score");
  add_study(forecast, f);

  auto* sample = app.add_subcommand("sample", "Dump samples from a saved dependence model");
  add_common(sample, f);
  std::string model_file;
  std::size_t n_samples = 1000, n_steps = 1;
  sample->add_option("--model-file", model_file, "Model JSON (copula or GMMN)")->required()->check(CLI::ExistingFile);
  sample->add_option("-n,--n", n_samples, "Number of samples (paths)")->capture_default_str();
  sample->add_option("--steps", n_steps, "Time steps per path (rows are path-major)")->capture_default_str();

  auto* train_gmmn = app.add_subcommand("train-gmmn", "Train a GMMN on pseudo-observations");
  add_study(train_gmmn, f);
  auto* fit_copula = app.add_subcommand("fit-copula", "Fit parametric copulas by maximum pseudo-likelihood");
  add_study(fit_copula, f);
  auto* fit_garch = app.add_subcommand("fit-garch", "Fit ARMA(1,1)-GARCH(1,1) margins and write residual uniforms");
  add_study(fit_garch, f);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) {
      auto c = resolve(f, "");
      const auto t = load_table(c);
      Run run("ingest", f.out);
      std::ostringstream os;
      io::write_price_csv(os, t);
      run.write("prices.csv", os.str());
      std::cout << "rows " << t.dates.size() << ", return periods " << t.periods() << ", tickers " << t.dim() << ", "
                << t.dates.front() << " .. " << t.dates.back() << "\n";
      run.finish(std::nullopt, {{"source", c.data}, {"rows", t.dates.size()}, {"tickers", t.tickers}});
      return 0;
    }

    if (synth->parsed()) {
      const std::uint64_t seed = f.seed.value_or(1);
      const std::string fam = synth_copula.empty() ? (synth_kind == "gbm" ? "t" : "clayton") : synth_copula;
      copulas::CopulaSpec spec;
      switch (copulas::parse_family(fam)) {
        case copulas::Family::Independence: spec = copulas::Independence{synth_d}; break;
        case copulas::Family::Clayton: spec = copulas::Clayton{synth_d, s_theta}; break;
        case copulas::Family::Normal: spec = copulas::Normal{copulas::equicorrelation(synth_d, s_rho)}; break;
        case copulas::Family::StudentT: spec = copulas::StudentT{copulas::equicorrelation(synth_d, s_rho), s_nu}; break;
      }
      copulas::validate(spec);
      Run run("synth", f.out);
      std::ostringstream os;
      json info = {{"kind", synth_kind}, {"copula", io::to_json(spec)}, {"seed", seed}};
      if (synth_kind == "gbm") {
        pipeline::SynthGbm s{synth_d, synth_rows ? synth_rows : 5288, s_sigma, s_rate, s_x0, spec, seed};
        io::write_price_csv(os, pipeline::synth_gbm(s));
        run.write("prices.csv", os.str());
        info["sigma"] = s_sigma;
        info["rate"] = s_rate;
      } else {
        pipeline::SynthGarch s;
        s.d = synth_d;
        s.rows = synth_rows ? synth_rows : 2001;
        s.params = s_garch;
        s.copula = spec;
        s.x0 = s_x0;
        s.seed = seed;
        const auto data = pipeline::synth_garch(s);
        io::write_price_csv(os, data.table);
        run.write("prices.csv", os.str());
        std::ostringstream rs, zs;
        io::write_matrix_csv(rs, data.returns, column_names("x", synth_d));
        io::write_matrix_csv(zs, data.innovations, column_names("z", synth_d));
        run.write("returns.csv", rs.str());
        run.write("innovations.csv", zs.str());
        info["garch"] = {{"mu", s_garch.mu}, {"phi", s_garch.phi}, {"gamma", s_garch.gamma}, {"omega", s_garch.omega},
                         {"alpha", s_garch.alpha}, {"beta", s_garch.beta}, {"nu", s_garch.nu}};
        info["return_scale"] = s.return_scale;
      }
      run.finish(std::nullopt, {{"synth", info}});
      return 0;
    }

    if (gof->parsed()) {
      const auto c = resolve(f, "gof");
      pipeline::validate(c);
      Run run("gof", f.out);
      emit_study(run, pipeline::run_gof(c, training_uniforms(c)), "gof_statistics", c);
      return 0;
    }
    if (price->parsed()) {
      const auto c = resolve(f, "price");
      Run run("price", f.out);
      emit_study(run, pipeline::run_price(c, load_table(c)), "price_replications", c);
      return 0;
    }
    if (forecast->parsed()) {
      const auto c = resolve(f, "forecast");
      Run run("forecast", f.out);
      emit_study(run, pipeline::run_forecast(c, load_table(c)), "forecast_scores", c);
      return 0;
    }

    if (sample->parsed()) {
      auto c = resolve(f, "");
      const auto model = pipeline::DependenceModel::from_json(io::read_json(model_file));
      const auto kind = qmc::parse_sampling(c.sampling.size() == 1 ? c.sampling.front() : "pseudo");
      Run run("sample", f.out);
      std::ostringstream os;
      io::write_matrix_csv(os, model.sample_paths(kind, n_samples, n_steps, c.seed).flatten(), column_names("u", model.dim()));
      run.write("samples.csv", os.str());
      run.finish(c, {{"model_file", model_file}, {"n", n_samples}, {"steps", n_steps}, {"sampling", qmc::to_string(kind)}});
      return 0;
    }

    if (train_gmmn->parsed()) {
      const auto c = resolve(f, "gof");
      const Matrix u = training_uniforms(c);
      Run run("train-gmmn", f.out);
      const auto res = gmmn::train(u, c.gmmn, derive_seed(c.seed, 1000));
      run.write_json("gmmn.json", io::to_json(res.model));
      std::ostringstream os;
      os << "epoch,loss\n";
      for (std::size_t e = 0; e < res.epoch_losses.size(); ++e) os << e + 1 << ',' << io::format_double(res.epoch_losses[e]) << '\n';
      run.write("gmmn_losses.csv", os.str());
      run.finish(c, {{"n_trn", u.rows()}});
      return 0;
    }

    if (fit_copula->parsed()) {
      auto c = resolve(f, "gof");
      if (f.models.empty()) c.models = {"clayton", "normal", "t"};
      const Matrix u = training_uniforms(c);
      Run run("fit-copula", f.out);
      for (const auto& name : c.models) {
        if (name == "gmmn") throw DomainError("fit-copula: use train-gmmn for the GMMN");
        const auto spec = copulas::fit_mpl(copulas::parse_family(name), u, c.copula);
        auto j = io::to_json(spec);
        j["log_pseudo_likelihood"] = copulas::log_likelihood(spec, u);
        run.write_json("copula_" + name + ".json", j);
      }
      run.finish(c, {{"n_trn", u.rows()}});
      return 0;
    }

    if (fit_garch->parsed()) {
      const auto c = resolve(f, "forecast");
      const auto t = load_table(c);
      const auto setup = pipeline::prepare_forecast(c, t);
      Run run("fit-garch", f.out);
      for (const auto& w : setup.fit.warnings) run.warn(w);
      auto j = io::to_json(setup.fit.model);
      j["tickers"] = t.tickers;
      j["n_trn"] = setup.n_trn;
      j["log_likelihood"] = setup.fit.log_likelihood;
      run.write_json("garch.json", j);
      std::ostringstream us, zs;
      io::write_matrix_csv(us, setup.fit.uniforms, t.tickers);
      io::write_matrix_csv(zs, setup.fit.residuals, t.tickers);
      run.write("residual_uniforms.csv", us.str());
      run.write("residuals.csv", zs.str());
      run.finish(c);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
