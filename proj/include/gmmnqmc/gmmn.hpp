#pragma once

// Generative moment matching network: a feed-forward generator G mapping an
// iid N(0,1)^d prior sample to (0,1)^d, trained by minimizing a mixture-
// Gaussian-kernel MMD between generated and training pseudo-observations.
// Pseudo- and quasi-random path sampling share one code path: uniforms are
// mapped through Phi^{-1} to the prior and then through G.

#include "gmmnqmc/common.hpp"
#include "gmmnqmc/qmc.hpp"
#include "gmmnqmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gmmnqmc::gmmn {

enum class Activation { ReLU, Sigmoid, Identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Identity: return "identity";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "identity") return Activation::Identity;
  throw Error("unknown activation: " + s);
}

inline const std::vector<double>& default_bandwidths() {
  static const std::vector<double> bw{0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0};
  return bw;
}

/// Training aborted because the loss became NaN or infinite.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(std::size_t iteration, std::vector<double> history)
      : Error("GMMN training produced a non-finite loss at iteration " + std::to_string(iteration)),
        iteration(iteration),
        loss_history(std::move(history)) {}
  std::size_t iteration;
  std::vector<double> loss_history;
};

/// Generator parameters. weights[l] is (dims[l+1] x dims[l]); layer l maps
/// rows h -> act(h W^T + b).
struct GmmnModel {
  std::vector<std::size_t> dims;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  std::vector<Activation> activations;
  std::vector<double> bandwidths = default_bandwidths();
  std::string prior = "normal";
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  std::size_t dim() const { return dims.empty() ? 0 : dims.front(); }
  std::size_t layers() const { return weights.size(); }

  void validate() const {
    if (dims.size() < 2 || weights.size() != dims.size() - 1 || biases.size() != weights.size() ||
        activations.size() != weights.size())
      throw DimensionError("GmmnModel: inconsistent layer structure");
    if (dims.front() != dims.back()) throw DimensionError("GmmnModel: input and output dimension differ");
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l].rows() != static_cast<Eigen::Index>(dims[l + 1]) ||
          weights[l].cols() != static_cast<Eigen::Index>(dims[l]) ||
          biases[l].size() != static_cast<Eigen::Index>(dims[l + 1]))
        throw DimensionError("GmmnModel: layer " + std::to_string(l) + " has wrong shape");
    if (activations.back() != Activation::Sigmoid) throw DomainError("GmmnModel: output activation must be sigmoid");
    if (prior != "normal") throw DomainError("GmmnModel: only the iid standard normal prior is supported");
  }

  /// G applied to each row of v; outputs clamped into (0,1). Dropout is never applied here.
  Matrix forward(const Matrix& v) const {
    if (v.cols() != static_cast<Eigen::Index>(dim())) throw DimensionError("GmmnModel::forward: input width mismatch");
    constexpr Eigen::Index kChunk = 4096;
    Matrix out(v.rows(), v.cols());
    for (Eigen::Index lo = 0; lo < v.rows(); lo += kChunk) {
      const Eigen::Index len = std::min(kChunk, v.rows() - lo);
      Matrix h = v.middleRows(lo, len);
      for (std::size_t l = 0; l < weights.size(); ++l) {
        Matrix z = h * weights[l].transpose();
        z.rowwise() += biases[l].transpose();
        h = apply(activations[l], z);
      }
      out.middleRows(lo, len) = h.unaryExpr([](double x) { return qmc::clamp_unit(x); });
    }
    return out;
  }

  static Matrix apply(Activation a, const Matrix& z) {
    switch (a) {
      case Activation::ReLU: return z.cwiseMax(0.0);
      case Activation::Sigmoid: return (1.0 + (-z.array()).exp()).inverse().matrix();
      case Activation::Identity: return z;
    }
    return z;
  }
};

/// Glorot-uniform weights, zero biases; ReLU hidden layers, sigmoid output.
inline GmmnModel make_model(std::size_t d, const std::vector<std::size_t>& hidden, std::uint64_t seed,
                            std::vector<double> bandwidths = default_bandwidths()) {
  if (d < 1) throw DomainError("make_model: dimension must be >= 1");
  GmmnModel m;
  m.dims.push_back(d);
  for (auto h : hidden) m.dims.push_back(h);
  m.dims.push_back(d);
  m.bandwidths = std::move(bandwidths);
  m.seed = seed;
  std::mt19937_64 gen(seed);
  for (std::size_t l = 0; l + 1 < m.dims.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(m.dims[l]), fan_out = static_cast<Eigen::Index>(m.dims[l + 1]);
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i)
      w.data()[i] = limit * (2.0 * static_cast<double>(gen() >> 11) * 0x1p-53 - 1.0);
    m.weights.push_back(std::move(w));
    m.biases.push_back(Vector::Zero(fan_out));
    m.activations.push_back(l + 2 == m.dims.size() ? Activation::Sigmoid : Activation::ReLU);
  }
  return m;
}

// ---------------------------------------------------------------------------
// MMD
// ---------------------------------------------------------------------------

namespace detail {

/// Pairwise squared Euclidean distances by direct differences, so equal rows
/// give exactly zero.
inline Matrix squared_distances(const Matrix& a, const Matrix& b) {
  Matrix d2 = Matrix::Zero(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    d2.array() += (a.col(j).replicate(1, b.rows()).array() - b.col(j).transpose().replicate(a.rows(), 1).array()).square();
  return d2;
}

/// Mixture kernel sum_m exp(-D2 / (2 sigma_m^2)); optionally also the
/// derivative weights sum_m exp(..) / sigma_m^2.
inline void mixture_kernel(const Matrix& d2, std::span<const double> bandwidths, Matrix& k, Matrix* w = nullptr) {
  k.setZero(d2.rows(), d2.cols());
  if (w) w->setZero(d2.rows(), d2.cols());
  for (double s : bandwidths) {
    const double inv = 1.0 / (s * s);
    // Exponents below -700 are clamped so results stay normal doubles (< 1e-304).
    const Matrix e = (d2.array() * (-0.5 * inv)).max(-700.0).exp().matrix();
    k += e;
    if (w) *w += inv * e;
  }
}

}  // namespace detail

/// Biased (V-statistic) MMD^2 with the mixture kernel. Direct double sums; the
/// self-distance diagonal is set to exactly zero.
inline double mmd2(const Matrix& a, const Matrix& b, std::span<const double> bandwidths) {
  if (a.cols() != b.cols()) throw DimensionError("mmd2: samples have different dimensions");
  if (bandwidths.empty()) throw DomainError("mmd2: need at least one bandwidth");
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("mmd2: empty sample");
  auto term = [&](const Matrix& x, const Matrix& y, bool same) {
    Matrix d2 = detail::squared_distances(x, y);
    if (same) d2.diagonal().setZero();
    Matrix k;
    detail::mixture_kernel(d2, bandwidths, k);
    return k.sum() / (static_cast<double>(x.rows()) * static_cast<double>(y.rows()));
  };
  return term(a, a, true) - 2.0 * term(a, b, false) + term(b, b, true);
}

/// MMD^2 between data x (fixed) and generated y, plus dLoss/dy.
inline double mmd2_with_gradient(const Matrix& x, const Matrix& y, std::span<const double> bandwidths, Matrix& grad_y) {
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  Matrix dxx = detail::squared_distances(x, x);
  dxx.diagonal().setZero();
  Matrix dxy = detail::squared_distances(x, y);
  Matrix dyy = detail::squared_distances(y, y);
  dyy.diagonal().setZero();
  Matrix kxx, kxy, kyy, wxy, wyy;
  detail::mixture_kernel(dxx, bandwidths, kxx);
  detail::mixture_kernel(dxy, bandwidths, kxy, &wxy);
  detail::mixture_kernel(dyy, bandwidths, kyy, &wyy);
  const double loss = kxx.sum() / (n * n) - 2.0 * kxy.sum() / (n * m) + kyy.sum() / (m * m);
  // dK(a, y)/dy = W(a, y) (a - y).
  const Vector sxy = wxy.colwise().sum().transpose();  // per generated point
  const Vector syy = wyy.rowwise().sum();
  const Matrix pull = wxy.transpose() * x - sxy.asDiagonal() * y;
  const Matrix push = wyy * y - syy.asDiagonal() * y;
  grad_y = (-2.0 / (n * m)) * pull + (2.0 / (m * m)) * push;
  return loss;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::vector<std::size_t> hidden{300};
  std::size_t batch_size = 128;
  std::size_t epochs = 300;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Generated samples per minibatch; 0 means equal to the batch size.
  std::size_t n_gen = 0;
  double dropout_rate = 0.3;
  std::vector<double> bandwidths = default_bandwidths();
};

struct TrainResult {
  GmmnModel model;
  /// Mean minibatch loss per epoch (dropout active, fresh prior samples each batch).
  std::vector<double> epoch_losses;
};

namespace detail {

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activations
  std::vector<Matrix> masks;   // dropout masks (scaled), empty when inactive
  Matrix output;
};

inline Matrix forward_train(const GmmnModel& m, const Matrix& v, double dropout, std::mt19937_64* gen, ForwardCache& c) {
  c.inputs.assign(m.layers(), Matrix());
  c.pre.assign(m.layers(), Matrix());
  c.masks.assign(m.layers(), Matrix());
  Matrix h = v;
  for (std::size_t l = 0; l < m.layers(); ++l) {
    c.inputs[l] = h;
    Matrix z = h * m.weights[l].transpose();
    z.rowwise() += m.biases[l].transpose();
    c.pre[l] = z;
    h = GmmnModel::apply(m.activations[l], z);
    const bool hidden = l + 1 < m.layers();
    if (hidden && dropout > 0.0 && gen) {
      const double keep = 1.0 - dropout;
      Matrix mask(h.rows(), h.cols());
      for (Eigen::Index i = 0; i < mask.size(); ++i)
        mask.data()[i] = static_cast<double>((*gen)() >> 11) * 0x1p-53 < keep ? 1.0 / keep : 0.0;
      h = h.cwiseProduct(mask);
      c.masks[l] = std::move(mask);
    }
  }
  c.output = h;
  return h;
}

/// Backpropagate dLoss/dOutput into per-layer weight and bias gradients.
inline void backward(const GmmnModel& m, const ForwardCache& c, Matrix grad, std::vector<Matrix>& gw,
                     std::vector<Vector>& gb) {
  gw.resize(m.layers());
  gb.resize(m.layers());
  for (std::size_t l = m.layers(); l-- > 0;) {
    // grad is dLoss/d(layer output after dropout).
    if (c.masks[l].size() > 0) grad = grad.cwiseProduct(c.masks[l]);
    switch (m.activations[l]) {
      case Activation::ReLU: grad = grad.cwiseProduct((c.pre[l].array() > 0.0).cast<double>().matrix()); break;
      case Activation::Sigmoid: {
        const Matrix s = GmmnModel::apply(Activation::Sigmoid, c.pre[l]);
        grad = grad.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
        break;
      }
      case Activation::Identity: break;
    }
    gw[l] = grad.transpose() * c.inputs[l];
    gb[l] = grad.colwise().sum().transpose();
    if (l > 0) grad = grad * m.weights[l];
  }
}

inline Matrix prior_sample(std::size_t n, std::size_t d, std::mt19937_64& gen) {
  Matrix v(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      v(i, j) = stats::normal_quantile(qmc::clamp_unit(static_cast<double>(gen() >> 11) * 0x1p-53));
  return v;
}

}  // namespace detail

/// Minibatch MMD loss and its gradient for given prior draws, without dropout.
/// Exposed for gradient checking.
inline double minibatch_loss(const GmmnModel& m, const Matrix& data, const Matrix& prior, std::vector<Matrix>* gw = nullptr,
                             std::vector<Vector>* gb = nullptr) {
  detail::ForwardCache cache;
  const Matrix y = detail::forward_train(m, prior, 0.0, nullptr, cache);
  Matrix grad;
  const double loss = mmd2_with_gradient(data, y, m.bandwidths, grad);
  if (gw && gb) detail::backward(m, cache, grad, *gw, *gb);
  return loss;
}

/// Adam on minibatch MMD^2. Deterministic given (data, cfg, seed).
inline TrainResult train(const Matrix& u_trn, const TrainConfig& cfg, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(u_trn.rows());
  const auto d = static_cast<std::size_t>(u_trn.cols());
  if (d < 2) throw DomainError("gmmn::train: need d >= 2");
  if (cfg.batch_size == 0 || cfg.batch_size > n) throw DomainError("gmmn::train: batch size must be in [1, n_trn]");
  if (!(cfg.learning_rate > 0.0) || cfg.epochs == 0) throw DomainError("gmmn::train: rates and epoch count must be positive");
  if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0) throw DomainError("gmmn::train: dropout rate must be in [0,1)");

  TrainResult res{make_model(d, cfg.hidden, seed, cfg.bandwidths), {}};
  GmmnModel& m = res.model;
  m.dropout_rate = cfg.dropout_rate;
  std::mt19937_64 gen(derive_seed(seed, 1));

  std::vector<Matrix> mw, vw;
  std::vector<Vector> mb, vb;
  for (std::size_t l = 0; l < m.layers(); ++l) {
    mw.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
    vw.push_back(mw.back());
    mb.push_back(Vector::Zero(m.biases[l].size()));
    vb.push_back(mb.back());
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> batch_losses;
  std::vector<Matrix> gw;
  std::vector<Vector> gb;
  detail::ForwardCache cache;
  std::size_t step = 0;
  const std::size_t n_gen = cfg.n_gen == 0 ? cfg.batch_size : cfg.n_gen;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with our own index draws so the permutation is portable.
    for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[gen() % (i + 1)]);
    double epoch_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < n; lo += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, n - lo);
      Matrix x(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(d));
      for (std::size_t r = 0; r < len; ++r) x.row(static_cast<Eigen::Index>(r)) = u_trn.row(static_cast<Eigen::Index>(order[lo + r]));
      const Matrix v = detail::prior_sample(n_gen, d, gen);
      const Matrix y = detail::forward_train(m, v, cfg.dropout_rate, &gen, cache);
      Matrix grad;
      const double loss = mmd2_with_gradient(x, y, m.bandwidths, grad);
      batch_losses.push_back(loss);
      if (!std::isfinite(loss)) throw NonFiniteLossError(step, batch_losses);
      detail::backward(m, cache, grad, gw, gb);

      ++step;
      const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const double lr = cfg.learning_rate * std::sqrt(bc2) / bc1;
      for (std::size_t l = 0; l < m.layers(); ++l) {
        mw[l] = cfg.beta1 * mw[l] + (1.0 - cfg.beta1) * gw[l];
        vw[l] = cfg.beta2 * vw[l] + (1.0 - cfg.beta2) * gw[l].cwiseAbs2();
        m.weights[l].array() -= lr * mw[l].array() / (vw[l].array().sqrt() + cfg.adam_eps);
        mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * gb[l];
        vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * gb[l].cwiseAbs2();
        m.biases[l].array() -= lr * mb[l].array() / (vb[l].array().sqrt() + cfg.adam_eps);
      }
      epoch_sum += loss;
      ++batches;
    }
    res.epoch_losses.push_back(epoch_sum / static_cast<double>(batches));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Applies V = Phi^{-1}(U) componentwise and returns G(V) in the same layout.
inline PathCube map_uniforms(const GmmnModel& m, const PathCube& u) {
  if (u.dim() != m.dim()) throw DimensionError("map_uniforms: cube dimension does not match the model");
  Matrix v = u.flatten();
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = stats::normal_quantile(v.data()[i]);
  return PathCube::from_rows(m.forward(v), u.n_pth(), u.n_gen());
}

/// Pseudo-random GMMN-dependent paths from fresh iid uniforms.
inline PathCube sample_paths_pseudo(const GmmnModel& m, std::size_t n_pth, std::size_t n_gen, std::uint64_t seed) {
  if (n_pth == 0 || n_gen == 0) throw DomainError("sample_paths_pseudo: counts must be >= 1");
  return map_uniforms(m, qmc::uniform_cube(qmc::Sampling::Pseudo, n_pth, n_gen, m.dim(), seed));
}

/// Quasi-random GMMN-dependent paths from one randomized Sobol' set of
/// dimension n_gen * d, blocked into paths.
inline PathCube sample_paths_quasi(const GmmnModel& m, std::size_t n_pth, std::size_t n_gen, std::uint64_t seed,
                                   const qmc::SobolDirections& table = qmc::SobolDirections::default_table()) {
  if (n_pth == 0 || n_gen == 0) throw DomainError("sample_paths_quasi: counts must be >= 1");
  const std::size_t dstar = n_gen * m.dim();
  if (dstar > table.max_dim())
    throw UnsupportedDimensionError("sample_paths_quasi: n_gen * d = " + std::to_string(dstar) +
                                    " exceeds the direction-number table (" + std::to_string(table.max_dim()) + ")");
  const auto ps = qmc::sobol_points(n_pth, dstar, seed, true, table);
  return map_uniforms(m, qmc::block_paths(ps, n_pth, n_gen, m.dim()));
}

inline PathCube sample_paths(const GmmnModel& m, qmc::Sampling kind, std::size_t n_pth, std::size_t n_gen, std::uint64_t seed) {
  return kind == qmc::Sampling::Quasi ? sample_paths_quasi(m, n_pth, n_gen, seed) : sample_paths_pseudo(m, n_pth, n_gen, seed);
}

}  // namespace gmmnqmc::gmmn
