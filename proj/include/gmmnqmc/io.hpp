#pragma once

// File formats: price tables and numeric matrices as CSV, models as JSON.

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/copulas.hpp"
#include "gmmnqmc/garch.hpp"
#include "gmmnqmc/gmmn.hpp"

#include <json.hpp>

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace gmmnqmc::io {

using json = nlohmann::json;

struct PriceTable {
  std::vector<std::string> dates;
  std::vector<std::string> tickers;
  /// (n + 1) x d positive prices, one row per date.
  Matrix prices;

  std::size_t dim() const { return tickers.size(); }
  /// Number of return periods n.
  std::size_t periods() const { return dates.empty() ? 0 : dates.size() - 1; }
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool parse_number(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  errno = 0;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE && std::isfinite(v);
}

inline bool is_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
    if (s[i] < '0' || s[i] > '9') return false;
  const int month = std::stoi(s.substr(5, 2)), day = std::stoi(s.substr(8, 2));
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

}  // namespace detail

/// Reads `date,<ticker>,...` with one row per date. `source` names the input in diagnostics.
inline PriceTable parse_price_csv(std::istream& in, const std::string& source = "<input>") {
  auto where = [&](std::size_t line) { return source + ":" + std::to_string(line) + ": "; };
  std::string line;
  std::size_t lineno = 0;
  PriceTable t;
  while (std::getline(in, line)) {
    ++lineno;
    if (!detail::trim(line).empty()) break;
  }
  auto header = detail::split(line);
  if (header.empty() || header[0] != "date") throw ParseError(where(lineno) + "header must start with 'date'");
  if (header.size() < 2) throw ParseError(where(lineno) + "header names no tickers");
  t.tickers.assign(header.begin() + 1, header.end());
  for (const auto& tk : t.tickers)
    if (tk.empty()) throw ParseError(where(lineno) + "empty ticker name in header");

  const std::size_t d = t.tickers.size();
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto f = detail::split(line);
    if (f.size() != d + 1)
      throw ParseError(where(lineno) + "expected " + std::to_string(d + 1) + " fields, found " + std::to_string(f.size()));
    if (!detail::is_iso_date(f[0])) throw ParseError(where(lineno) + "malformed date '" + f[0] + "' (expected YYYY-MM-DD)");
    if (!t.dates.empty()) {
      if (f[0] == t.dates.back()) throw ParseError(where(lineno) + "duplicate date " + f[0]);
      if (f[0] < t.dates.back()) throw ParseError(where(lineno) + "date " + f[0] + " is not after " + t.dates.back());
    }
    for (std::size_t j = 0; j < d; ++j) {
      const auto& cell = f[j + 1];
      const std::string loc = where(lineno) + "column " + t.tickers[j] + ": ";
      if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan")
        throw ParseError(loc + "missing value (rows with missing values are rejected)");
      double v;
      if (!detail::parse_number(cell, v)) throw ParseError(loc + "malformed number '" + cell + "'");
      if (!(v > 0.0)) throw ParseError(loc + "nonpositive price " + cell);
      values.push_back(v);
    }
    t.dates.push_back(f[0]);
  }
  if (t.dates.size() < 2) throw ParseError(source + ": need at least two dated rows");
  t.prices.resize(static_cast<Eigen::Index>(t.dates.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < t.dates.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) t.prices(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * d + j];
  return t;
}

inline PriceTable ingest_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  return parse_price_csv(in, path);
}

inline void write_price_csv(std::ostream& out, const PriceTable& t) {
  out << "date";
  for (const auto& tk : t.tickers) out << ',' << tk;
  out << '\n';
  for (std::size_t i = 0; i < t.dates.size(); ++i) {
    out << t.dates[i];
    for (Eigen::Index j = 0; j < t.prices.cols(); ++j) out << ',' << format_double(t.prices(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

/// First `rows` rows of the table, for estimation on the training window only.
inline PriceTable head(const PriceTable& t, std::size_t rows) {
  if (rows > t.dates.size()) throw DomainError("head: requested more rows than the table has");
  PriceTable h;
  h.tickers = t.tickers;
  h.dates.assign(t.dates.begin(), t.dates.begin() + static_cast<std::ptrdiff_t>(rows));
  h.prices = t.prices.topRows(static_cast<Eigen::Index>(rows));
  return h;
}

/// Number of rows dated on or before `boundary` (ISO date).
inline std::size_t rows_through(const PriceTable& t, const std::string& boundary) {
  std::size_t n = 0;
  while (n < t.dates.size() && t.dates[n] <= boundary) ++n;
  return n;
}

/// Consecutive calendar dates starting at 2000-01-03.
inline std::vector<std::string> synthetic_dates(std::size_t n) {
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  std::vector<std::string> out;
  out.reserve(n);
  int y = 2000, m = 1, dd = 3;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, dd);
    out.emplace_back(buf);
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    const int len = kDays[m - 1] + (m == 2 && leap ? 1 : 0);
    if (++dd > len) {
      dd = 1;
      if (++m > 12) {
        m = 1;
        ++y;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Numeric matrices
// ---------------------------------------------------------------------------

inline void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& header) {
  if (!header.empty()) {
    if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw DimensionError("write_matrix_csv: header size mismatch");
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

/// Reads a numeric CSV with a header row.
inline Matrix read_matrix_csv(std::istream& in, const std::string& source = "<input>") {
  std::string line;
  std::size_t lineno = 0, cols = 0;
  std::vector<double> values;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto f = detail::split(line);
    if (header) {
      cols = f.size();
      header = false;
      continue;
    }
    if (f.size() != cols)
      throw ParseError(source + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) + " fields");
    for (std::size_t j = 0; j < cols; ++j) {
      double v;
      if (!detail::parse_number(f[j], v))
        throw ParseError(source + ":" + std::to_string(lineno) + ": malformed number '" + f[j] + "' in field " + std::to_string(j + 1));
      values.push_back(v);
    }
  }
  if (cols == 0 || values.empty()) throw ParseError(source + ": no data rows");
  const auto rows = static_cast<Eigen::Index>(values.size() / cols);
  Matrix m(rows, static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = values[static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(j)];
  return m;
}

inline Matrix read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  return read_matrix_csv(in, path);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) throw ParseError("expected a nonempty array of rows");
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != j[0].size()) throw ParseError("ragged matrix rows");
    for (std::size_t c = 0; c < j[i].size(); ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

inline json to_json(const copulas::CopulaSpec& s) {
  json j;
  j["family"] = copulas::to_string(copulas::family(s));
  j["dim"] = copulas::dim(s);
  std::visit([&](const auto& c) {
    using T = std::decay_t<decltype(c)>;
    if constexpr (std::is_same_v<T, copulas::Clayton>) j["theta"] = c.theta;
    if constexpr (std::is_same_v<T, copulas::Normal>) j["P"] = matrix_to_json(c.P);
    if constexpr (std::is_same_v<T, copulas::StudentT>) {
      j["P"] = matrix_to_json(c.P);
      j["nu"] = c.nu;
    }
  }, s);
  return j;
}

inline copulas::CopulaSpec copula_from_json(const json& j) {
  try {
    const auto fam = copulas::parse_family(j.at("family").get<std::string>());
    copulas::CopulaSpec s;
    switch (fam) {
      case copulas::Family::Independence: s = copulas::Independence{j.at("dim").get<std::size_t>()}; break;
      case copulas::Family::Clayton: s = copulas::Clayton{j.at("dim").get<std::size_t>(), j.at("theta").get<double>()}; break;
      case copulas::Family::Normal: s = copulas::Normal{matrix_from_json(j.at("P"))}; break;
      case copulas::Family::StudentT: s = copulas::StudentT{matrix_from_json(j.at("P")), j.at("nu").get<double>()}; break;
    }
    copulas::validate(s);
    return s;
  } catch (const json::exception& e) {
    throw ParseError(std::string("copula JSON: ") + e.what());
  }
}

inline json to_json(const gmmn::GmmnModel& m) {
  json j;
  j["type"] = "gmmn";
  j["dims"] = m.dims;
  j["weights"] = json::array();
  for (const auto& w : m.weights) j["weights"].push_back(matrix_to_json(w));
  j["biases"] = json::array();
  for (const auto& b : m.biases) j["biases"].push_back(std::vector<double>(b.data(), b.data() + b.size()));
  j["activations"] = json::array();
  for (auto a : m.activations) j["activations"].push_back(gmmn::to_string(a));
  j["bandwidths"] = m.bandwidths;
  j["prior"] = m.prior;
  j["dropout"] = m.dropout_rate;
  j["seed"] = m.seed;
  return j;
}

inline gmmn::GmmnModel gmmn_from_json(const json& j) {
  try {
    gmmn::GmmnModel m;
    m.dims = j.at("dims").get<std::vector<std::size_t>>();
    for (const auto& w : j.at("weights")) m.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("biases")) {
      const auto v = b.get<std::vector<double>>();
      m.biases.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    for (const auto& a : j.at("activations")) m.activations.push_back(gmmn::parse_activation(a.get<std::string>()));
    m.bandwidths = j.at("bandwidths").get<std::vector<double>>();
    m.prior = j.value("prior", std::string("normal"));
    m.dropout_rate = j.value("dropout", 0.0);
    m.seed = j.value("seed", std::uint64_t{0});
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("GMMN JSON: ") + e.what());
  }
}

inline json to_json(const garch::ArmaGarchModel& m) {
  json j;
  j["type"] = "arma_garch";
  j["margins"] = json::array();
  for (std::size_t k = 0; k < m.dim(); ++k) {
    const auto& p = m.margins[k];
    const auto& s = m.state[k];
    j["margins"].push_back({{"mu", p.mu}, {"phi", p.phi}, {"gamma", p.gamma}, {"omega", p.omega}, {"alpha", p.alpha},
                            {"beta", p.beta}, {"nu", p.nu},
                            {"state", {{"x", s.x}, {"mu", s.mu}, {"sigma2", s.sigma2}}}});
  }
  return j;
}

inline garch::ArmaGarchModel garch_from_json(const json& j) {
  try {
    garch::ArmaGarchModel m;
    for (const auto& e : j.at("margins")) {
      m.margins.push_back({e.at("mu").get<double>(), e.at("phi").get<double>(), e.at("gamma").get<double>(),
                           e.at("omega").get<double>(), e.at("alpha").get<double>(), e.at("beta").get<double>(),
                           e.at("nu").get<double>()});
      const auto& s = e.at("state");
      m.state.push_back({s.at("x").get<double>(), s.at("mu").get<double>(), s.at("sigma2").get<double>()});
    }
    garch::validate(m);
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("ARMA-GARCH JSON: ") + e.what());
  }
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  out << text;
}

/// 64-bit FNV-1a, used to tag report rows with their configuration.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace gmmnqmc::io
