#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "welwl/error.hpp"

namespace welwl {

/// Dense row-major matrix of 64-bit floats.
class Matrix {
public:
  Matrix() = default;

  Matrix(int rows, int cols) : rows_(rows), cols_(cols), values_(static_cast<std::size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw ConfigError("Matrix: negative shape " + shape_string());
  }

  Matrix(int rows, int cols, std::vector<double> values) : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != static_cast<std::size_t>(rows) * cols)
      throw DimensionError("Matrix: " + std::to_string(values_.size()) + " values for shape " + shape_string());
  }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  std::string shape_string() const { return std::to_string(rows_) + "x" + std::to_string(cols_); }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

/// n x n x D array of pairwise features: the carrier of per-pair state for
/// color refinement and for the network layers built on it. Values are
/// stored pair-major, so the D channels of a pair are contiguous.
class EdgeTensor {
public:
  EdgeTensor() = default;

  EdgeTensor(int n, int channels)
      : n_(n), channels_(channels), values_(static_cast<std::size_t>(n) * n * channels, 0.0) {
    if (n <= 0 || channels <= 0)
      throw ConfigError("EdgeTensor: invalid shape n=" + std::to_string(n) + " D=" + std::to_string(channels));
  }

  int node_count() const { return n_; }
  int channels() const { return channels_; }

  double& at(int i, int j, int d) { return values_[index(i, j, d)]; }
  double at(int i, int j, int d) const { return values_[index(i, j, d)]; }

  std::span<double> pair(int i, int j) { return {values_.data() + index(i, j, 0), static_cast<std::size_t>(channels_)}; }
  std::span<const double> pair(int i, int j) const {
    return {values_.data() + index(i, j, 0), static_cast<std::size_t>(channels_)};
  }

  /// Channel slice as an n x n matrix (by value).
  Matrix channel(int d) const {
    Matrix m(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) m(i, j) = at(i, j, d);
    return m;
  }

  void set_channel(int d, const Matrix& m) {
    if (m.rows() != n_ || m.cols() != n_)
      throw DimensionError("EdgeTensor::set_channel: " + m.shape_string() + " into n=" + std::to_string(n_));
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) at(i, j, d) = m(i, j);
  }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const EdgeTensor&, const EdgeTensor&) = default;

private:
  std::size_t index(int i, int j, int d) const {
    return (static_cast<std::size_t>(i) * n_ + j) * channels_ + d;
  }

  int n_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

/// Product c = a * b with a fixed ascending-k summation order per output
/// entry, so repeated runs are bit-identical.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: a is " + a.shape_string() + ", b is " + b.shape_string());
  Matrix c(a.rows(), b.cols());
  const int n = a.rows(), k_max = a.cols(), m = b.cols();
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < k_max; ++k) {
      const double aik = a(i, k);
      for (int j = 0; j < m; ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError("hadamard: " + a.shape_string() + " vs " + b.shape_string());
  Matrix c(a.rows(), a.cols());
  auto av = a.values(), bv = b.values();
  auto cv = c.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = av[i] * bv[i];
  return c;
}

inline EdgeTensor hadamard(const EdgeTensor& a, const EdgeTensor& b) {
  if (a.node_count() != b.node_count() || a.channels() != b.channels())
    throw DimensionError("hadamard: edge tensors n=" + std::to_string(a.node_count()) + " D=" +
                         std::to_string(a.channels()) + " vs n=" + std::to_string(b.node_count()) + " D=" +
                         std::to_string(b.channels()));
  EdgeTensor c(a.node_count(), a.channels());
  auto av = a.values(), bv = b.values();
  auto cv = c.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = av[i] * bv[i];
  return c;
}

enum class ActivationKind { relu, leaky_relu, softplus, scaled_softplus, elu, leaky_elu, tanh, sigmoid };

/// Activation tag plus the slope/mixing parameter used by the leaky variants.
struct Activation {
  ActivationKind kind = ActivationKind::softplus;
  double alpha = 0.01;

  friend bool operator==(const Activation&, const Activation&) = default;
};

/// True for the smooth non-polynomial activations (everything but the two
/// piecewise-linear ones).
inline bool is_analytic(ActivationKind kind) {
  return kind != ActivationKind::relu && kind != ActivationKind::leaky_relu;
}

namespace detail {

// ln(1+e^x) with saturation branches; the discarded tail is < 1e-13.
inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return 0.0;
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }

}  // namespace detail

inline double activate(const Activation& a, double x) {
  switch (a.kind) {
    case ActivationKind::relu:
      return x > 0.0 ? x : 0.0;
    case ActivationKind::leaky_relu:
      return x > 0.0 ? x : a.alpha * x;
    case ActivationKind::softplus:
      return detail::softplus(x);
    case ActivationKind::scaled_softplus:
      // Zero-centered softplus; see README for the exact definition used.
      return detail::softplus(x) - std::numbers::ln2;
    case ActivationKind::elu:
      return detail::elu(x);
    case ActivationKind::leaky_elu:
      return detail::elu(x) - a.alpha * detail::softplus(-x);
    case ActivationKind::tanh:
      return std::tanh(x);
    case ActivationKind::sigmoid:
      return detail::sigmoid(x);
  }
  throw ConfigError("activate: unknown activation kind");
}

/// Closed-form derivative, used by the finite-difference cross-checks.
inline double activate_derivative(const Activation& a, double x) {
  switch (a.kind) {
    case ActivationKind::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::leaky_relu:
      return x > 0.0 ? 1.0 : a.alpha;
    case ActivationKind::softplus:
    case ActivationKind::scaled_softplus:
      return detail::sigmoid(x);
    case ActivationKind::elu:
      return x >= 0.0 ? 1.0 : std::exp(x);
    case ActivationKind::leaky_elu:
      return (x >= 0.0 ? 1.0 : std::exp(x)) + a.alpha * detail::sigmoid(-x);
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::sigmoid: {
      const double s = detail::sigmoid(x);
      return s * (1.0 - s);
    }
  }
  throw ConfigError("activate_derivative: unknown activation kind");
}

inline std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::leaky_relu: return "leaky_relu";
    case ActivationKind::softplus: return "softplus";
    case ActivationKind::scaled_softplus: return "scaled_softplus";
    case ActivationKind::elu: return "elu";
    case ActivationKind::leaky_elu: return "leaky_elu";
    case ActivationKind::tanh: return "tanh";
    case ActivationKind::sigmoid: return "sigmoid";
  }
  return "?";
}

inline ActivationKind activation_kind_from_string(const std::string& name) {
  if (name == "relu") return ActivationKind::relu;
  if (name == "leaky_relu") return ActivationKind::leaky_relu;
  if (name == "softplus") return ActivationKind::softplus;
  if (name == "scaled_softplus") return ActivationKind::scaled_softplus;
  if (name == "elu") return ActivationKind::elu;
  if (name == "leaky_elu") return ActivationKind::leaky_elu;
  if (name == "tanh") return ActivationKind::tanh;
  if (name == "sigmoid") return ActivationKind::sigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

/// One affine map plus an elementwise activation: rho(Ax + b).
struct DenseLayer {
  Matrix weight;             // out_dim x in_dim
  std::vector<double> bias;  // out_dim
  Activation activation;

  int in_dim() const { return weight.cols(); }
  int out_dim() const { return weight.rows(); }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

inline std::vector<double> layer_forward(const DenseLayer& layer, std::span<const double> x) {
  if (static_cast<int>(x.size()) != layer.in_dim())
    throw DimensionError("layer_forward: input length " + std::to_string(x.size()) + " vs weight " +
                         layer.weight.shape_string());
  std::vector<double> y(static_cast<std::size_t>(layer.out_dim()));
  for (int o = 0; o < layer.out_dim(); ++o) {
    double acc = layer.bias[static_cast<std::size_t>(o)];
    for (int i = 0; i < layer.in_dim(); ++i) acc += layer.weight(o, i) * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = activate(layer.activation, acc);
  }
  return y;
}

/// Apply one dense layer to every pair feature of an edge tensor. Writes
/// straight into the output tensor; the arithmetic per output entry matches
/// layer_forward exactly (bias first, then ascending-input accumulation).
inline EdgeTensor apply_layer_to_pairs(const DenseLayer& layer, const EdgeTensor& t) {
  if (t.channels() != layer.in_dim())
    throw DimensionError("apply_layer_to_pairs: tensor D=" + std::to_string(t.channels()) + " vs weight " +
                         layer.weight.shape_string());
  const int n = t.node_count();
  const int in_dim = layer.in_dim();
  const int out_dim = layer.out_dim();
  EdgeTensor out(n, out_dim);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto x = t.pair(i, j);
      auto dst = out.pair(i, j);
      for (int o = 0; o < out_dim; ++o) {
        double acc = layer.bias[static_cast<std::size_t>(o)];
        for (int d = 0; d < in_dim; ++d) acc += layer.weight(o, d) * x[static_cast<std::size_t>(d)];
        dst[static_cast<std::size_t>(o)] = activate(layer.activation, acc);
      }
    }
  }
  return out;
}

}  // namespace welwl
