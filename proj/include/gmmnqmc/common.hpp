#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmmnqmc {

/// Samples are stored as n x d matrices, one observation per row.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Shapes of inputs do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Requested Sobol' dimension exceeds the loaded direction-number table.
class UnsupportedDimensionError : public Error {
 public:
  using Error::Error;
};

/// A marginal series has zero variance and cannot be standardized.
class DegenerateMarginError : public Error {
 public:
  using Error::Error;
};

/// An iterative fit stopped at its iteration cap. Carries the best iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best, double best_value)
      : Error(what), best_iterate(std::move(best)), best_objective(best_value) {}
  std::vector<double> best_iterate;
  double best_objective;
};

/// Malformed input file; message carries the location.
class ParseError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// PathCube
// ---------------------------------------------------------------------------

/// n_pth x n_gen x d block of samples. Element (i, k, j) is path i, step k,
/// component j (all zero-based). Storage is contiguous with j fastest, so a
/// (path, step) pair addresses one contiguous d-vector.
class PathCube {
 public:
  PathCube() = default;
  PathCube(std::size_t n_pth, std::size_t n_gen, std::size_t d, double fill = 0.0)
      : n_pth_(n_pth), n_gen_(n_gen), d_(d), data_(n_pth * n_gen * d, fill) {}

  std::size_t n_pth() const noexcept { return n_pth_; }
  std::size_t n_gen() const noexcept { return n_gen_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t k, std::size_t j) {
    return data_[(i * n_gen_ + k) * d_ + j];
  }
  double operator()(std::size_t i, std::size_t k, std::size_t j) const {
    return data_[(i * n_gen_ + k) * d_ + j];
  }

  std::span<double> at(std::size_t i, std::size_t k) {
    return {data_.data() + (i * n_gen_ + k) * d_, d_};
  }
  std::span<const double> at(std::size_t i, std::size_t k) const {
    return {data_.data() + (i * n_gen_ + k) * d_, d_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  /// All n_pth * n_gen d-vectors stacked as rows, path-major.
  Matrix flatten() const {
    Matrix m(n_pth_ * n_gen_, d_);
    for (std::size_t r = 0; r < n_pth_ * n_gen_; ++r)
      for (std::size_t j = 0; j < d_; ++j) m(r, j) = data_[r * d_ + j];
    return m;
  }

  /// Inverse of flatten().
  static PathCube from_rows(const Matrix& rows, std::size_t n_pth, std::size_t n_gen) {
    if (static_cast<std::size_t>(rows.rows()) != n_pth * n_gen)
      throw DimensionError("PathCube::from_rows: row count does not equal n_pth * n_gen");
    PathCube c(n_pth, n_gen, static_cast<std::size_t>(rows.cols()));
    for (std::size_t r = 0; r < n_pth * n_gen; ++r)
      for (std::size_t j = 0; j < c.d_; ++j) c.data_[r * c.d_ + j] = rows(r, j);
    return c;
  }

  friend bool operator==(const PathCube&, const PathCube&) = default;

 private:
  std::size_t n_pth_ = 0;
  std::size_t n_gen_ = 0;
  std::size_t d_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Seeds
// ---------------------------------------------------------------------------

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed for stream `index` of `master`, e.g. one per replication.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(mix64(master) ^ (index + 0x632be59bd9b4e019ULL));
}

}  // namespace gmmnqmc
