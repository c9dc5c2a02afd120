#pragma once

// Uniform point sources: seeded pseudo-random uniforms, (randomized) Sobol'
// points from Joe-Kuo direction numbers, and the column blocking that turns
// one n_pth x (n_gen * d) point set into n_pth paths of n_gen d-vectors.

#include "gmmnqmc/common.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef GMMNQMC_DEFAULT_DIRECTION_FILE
#define GMMNQMC_DEFAULT_DIRECTION_FILE "data/new-joe-kuo-6.21201"
#endif

namespace gmmnqmc::qmc {

inline constexpr double kUnitLow = 0x1p-53;
inline constexpr double kUnitHigh = 1.0 - 0x1p-53;

/// Clamp into [2^-53, 1 - 2^-53] so quantile functions never see 0 or 1.
constexpr double clamp_unit(double u) noexcept { return std::clamp(u, kUnitLow, kUnitHigh); }

enum class PointKind { PseudoRandom, Sobol, RandomizedSobol };

/// n x dim matrix of values in (0,1). Immutable once built.
class PointSet {
 public:
  PointSet(Matrix points, PointKind kind, std::uint64_t seed)
      : points_(std::move(points)), kind_(kind), seed_(seed) {}

  const Matrix& points() const noexcept { return points_; }
  PointKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(points_.cols()); }

 private:
  Matrix points_;
  PointKind kind_;
  std::uint64_t seed_;
};

/// One row of a direction-number file: degree s, coefficient bits a, initial m_1..m_s.
struct PrimitivePolynomial {
  unsigned degree = 0;
  std::uint64_t coefficients = 0;
  std::vector<std::uint64_t> initial;
};

/// Joe-Kuo direction-number table. Dimension 1 (van der Corput) is implicit;
/// the file supplies dimensions 2, 3, ...
class SobolDirections {
 public:
  /// Number of usable output bits; sequences may have up to 2^kBits - 1 points.
  static constexpr unsigned kBits = 52;

  SobolDirections() = default;
  explicit SobolDirections(std::vector<PrimitivePolynomial> polys) : polys_(std::move(polys)) {}

  /// Parse the whitespace-separated `d s a m_1 ... m_s` format. A non-numeric
  /// first line is treated as a header.
  static SobolDirections parse(std::istream& in) {
    std::vector<PrimitivePolynomial> polys;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::istringstream ls(line);
      std::string first;
      if (!(ls >> first)) continue;
      if (first.find_first_not_of("0123456789") != std::string::npos) {
        if (line_no == 1) continue;
        throw ParseError("direction numbers, line " + std::to_string(line_no) + ": non-numeric field");
      }
      PrimitivePolynomial p;
      std::uint64_t a = 0;
      if (!(ls >> p.degree >> a) || p.degree == 0 || p.degree >= kBits)
        throw ParseError("direction numbers, line " + std::to_string(line_no) + ": bad degree");
      p.coefficients = a;
      p.initial.resize(p.degree);
      for (unsigned k = 0; k < p.degree; ++k) {
        if (!(ls >> p.initial[k]))
          throw ParseError("direction numbers, line " + std::to_string(line_no) + ": missing m_" +
                           std::to_string(k + 1));
        // m_k must be odd and below 2^k.
        if ((p.initial[k] & 1u) == 0 || p.initial[k] >= (std::uint64_t{1} << (k + 1)))
          throw ParseError("direction numbers, line " + std::to_string(line_no) + ": invalid m_" +
                           std::to_string(k + 1));
      }
      polys.push_back(std::move(p));
    }
    return SobolDirections(std::move(polys));
  }

  static SobolDirections load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open direction-number file: " + path);
    return parse(in);
  }

  /// Table loaded once from $GMMNQMC_DIRECTIONS, or the compiled-in default path.
  static const SobolDirections& default_table() {
    static const SobolDirections table = [] {
      const char* env = std::getenv("GMMNQMC_DIRECTIONS");
      return load(env && *env ? std::string(env) : std::string(GMMNQMC_DEFAULT_DIRECTION_FILE));
    }();
    return table;
  }

  std::size_t max_dim() const noexcept { return polys_.size() + 1; }

  /// Direction integers v_1..v_kBits for dimension `dim` (zero-based),
  /// left-aligned in 64 bits: v_k = m_k * 2^(64-k).
  std::vector<std::uint64_t> directions(std::size_t dim) const {
    std::vector<std::uint64_t> v(kBits + 1, 0);
    if (dim == 0) {
      for (unsigned k = 1; k <= kBits; ++k) v[k] = std::uint64_t{1} << (64 - k);
      return v;
    }
    const auto& p = polys_.at(dim - 1);
    const unsigned s = p.degree;
    for (unsigned k = 1; k <= s; ++k) v[k] = p.initial[k - 1] << (64 - k);
    for (unsigned k = s + 1; k <= kBits; ++k) {
      v[k] = v[k - s] ^ (v[k - s] >> s);
      for (unsigned l = 1; l < s; ++l)
        if ((p.coefficients >> (s - 1 - l)) & 1u) v[k] ^= v[k - l];
    }
    return v;
  }

 private:
  std::vector<PrimitivePolynomial> polys_;
};

/// First n points (skipping the all-zero point) of the dim-dimensional Sobol'
/// sequence in Gray-code order. With `randomize`, each coordinate is XORed by
/// a 64-bit digital shift drawn from `seed`.
inline PointSet sobol_points(std::size_t n, std::size_t dim, std::uint64_t seed, bool randomize,
                             const SobolDirections& table = SobolDirections::default_table()) {
  if (n == 0) throw DomainError("sobol_points: n must be >= 1");
  if (dim == 0) throw DomainError("sobol_points: dim must be >= 1");
  if (dim > table.max_dim())
    throw UnsupportedDimensionError("sobol_points: dimension " + std::to_string(dim) +
                                    " exceeds direction-number table (" +
                                    std::to_string(table.max_dim()) + ")");
  if (n >= (std::uint64_t{1} << SobolDirections::kBits))
    throw DomainError("sobol_points: too many points");

  std::vector<std::uint64_t> v(dim * (SobolDirections::kBits + 1));
  for (std::size_t j = 0; j < dim; ++j) {
    auto dj = table.directions(j);
    std::copy(dj.begin(), dj.end(), v.begin() + static_cast<std::ptrdiff_t>(j * (SobolDirections::kBits + 1)));
  }
  std::vector<std::uint64_t> shift(dim, 0);
  if (randomize) {
    std::mt19937_64 gen(seed);
    for (auto& s : shift) s = gen();
  }

  Matrix pts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  std::vector<std::uint64_t> x(dim, 0);
  for (std::size_t idx = 1; idx <= n; ++idx) {
    const unsigned c = static_cast<unsigned>(std::countr_zero(static_cast<std::uint64_t>(idx))) + 1;
    for (std::size_t j = 0; j < dim; ++j) {
      x[j] ^= v[j * (SobolDirections::kBits + 1) + c];
      const double u = static_cast<double>((x[j] ^ shift[j]) >> 11) * 0x1p-53;
      pts(static_cast<Eigen::Index>(idx - 1), static_cast<Eigen::Index>(j)) = clamp_unit(u);
    }
  }
  return {std::move(pts), randomize ? PointKind::RandomizedSobol : PointKind::Sobol, seed};
}

/// n x dim iid uniforms from mt19937_64(seed), filled row by row.
inline PointSet pseudo_uniforms(std::size_t n, std::size_t dim, std::uint64_t seed) {
  if (n == 0 || dim == 0) throw DomainError("pseudo_uniforms: n and dim must be >= 1");
  std::mt19937_64 gen(seed);
  Matrix pts(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index j = 0; j < pts.cols(); ++j)
      pts(i, j) = clamp_unit(static_cast<double>(gen() >> 11) * 0x1p-53);
  return {std::move(pts), PointKind::PseudoRandom, seed};
}

/// Point-set rows become paths; columns are split into n_gen consecutive
/// groups of d, group k giving step k of the path.
inline PathCube block_paths(const PointSet& ps, std::size_t n_pth, std::size_t n_gen, std::size_t d) {
  const Matrix& p = ps.points();
  if (ps.size() != n_pth || ps.dim() != n_gen * d)
    throw DimensionError("block_paths: point set is " + std::to_string(ps.size()) + "x" +
                         std::to_string(ps.dim()) + ", expected " + std::to_string(n_pth) + "x" +
                         std::to_string(n_gen * d));
  PathCube cube(n_pth, n_gen, d);
  for (std::size_t i = 0; i < n_pth; ++i)
    for (std::size_t k = 0; k < n_gen; ++k)
      for (std::size_t j = 0; j < d; ++j)
        cube(i, k, j) = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k * d + j));
  return cube;
}

enum class Sampling { Pseudo, Quasi };

/// Uniform cube for n_pth paths of n_gen steps: iid uniforms, or a randomized
/// Sobol' set of dimension n_gen * d blocked into paths.
inline PathCube uniform_cube(Sampling kind, std::size_t n_pth, std::size_t n_gen, std::size_t d,
                             std::uint64_t seed) {
  const PointSet ps = kind == Sampling::Quasi ? sobol_points(n_pth, n_gen * d, seed, true)
                                              : pseudo_uniforms(n_pth, n_gen * d, seed);
  return block_paths(ps, n_pth, n_gen, d);
}

inline const char* to_string(Sampling s) { return s == Sampling::Quasi ? "quasi" : "pseudo"; }

inline Sampling parse_sampling(const std::string& s) {
  if (s == "pseudo") return Sampling::Pseudo;
  if (s == "quasi") return Sampling::Quasi;
  throw Error("unknown sampling kind: " + s);
}

}  // namespace gmmnqmc::qmc
