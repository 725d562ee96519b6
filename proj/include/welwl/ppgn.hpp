#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "welwl/error.hpp"
#include "welwl/rng.hpp"
#include "welwl/tensor.hpp"

namespace welwl {

enum class Combination { product, concat };

inline std::string to_string(Combination c) { return c == Combination::product ? "product" : "concat"; }

inline Combination combination_from_string(const std::string& name) {
  if (name == "product") return Combination::product;
  if (name == "concat") return Combination::concat;
  throw ConfigError("unknown combination '" + name + "'");
}

struct PpgnLayerParams {
  DenseLayer phi1;
  DenseLayer phi2;
  DenseLayer phi3;
};

/// All weights of an analytic PPGN: T layers of three shallow maps each,
/// plus a readout, together with the width bookkeeping.
///
/// With the product combination every hidden width equals hidden_dim; with
/// the concat combination the pair-feature width doubles per layer.
struct PpgnParams {
  int input_dim = 0;   // D of the input edge tensor
  int hidden_dim = 0;  // output width of each phi
  int iterations = 0;  // T
  Combination combination = Combination::product;
  Activation activation;
  std::uint64_t seed = 0;  // provenance echo
  std::vector<int> widths;  // widths[t] = pair-feature width entering layer t; widths[T] feeds the readout
  std::vector<PpgnLayerParams> layers;
  DenseLayer readout;

  std::size_t parameter_count() const {
    std::size_t count = 0;
    auto add = [&count](const DenseLayer& l) {
      count += static_cast<std::size_t>(l.weight.rows()) * l.weight.cols() + l.bias.size();
    };
    for (const auto& layer : layers) {
      add(layer.phi1);
      add(layer.phi2);
      add(layer.phi3);
    }
    add(readout);
    return count;
  }
};

using GlobalFeature = std::vector<double>;

namespace detail {

// Gaussian weights scaled by 1/sqrt(fan_in) so pre-activation variance is
// independent of the width; without the scaling the product-combination
// layers overflow double precision already at moderate width and depth. The
// draw stays absolutely continuous, which is what the almost-every-parameter
// separation statements need.
inline DenseLayer random_dense(RngStream rng, int out_dim, int in_dim, Activation activation) {
  DenseLayer layer;
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::vector<double> weights = rng.substream("weight").gaussian_vector(static_cast<std::size_t>(out_dim) * in_dim);
  for (double& w : weights) w *= scale;
  layer.weight = Matrix(out_dim, in_dim, std::move(weights));
  layer.bias = rng.substream("bias").gaussian_vector(static_cast<std::size_t>(out_dim));
  layer.activation = activation;
  return layer;
}

}  // namespace detail

/// Gaussian initialization of a PPGN, deterministic in the seed. Width and
/// depth must be at least one.
inline PpgnParams init_params(std::uint64_t seed, int input_dim, int hidden_dim, int iterations,
                              Activation activation, Combination combination = Combination::product) {
  if (hidden_dim < 1) throw ConfigError("init_params: hidden width must be >= 1, got " + std::to_string(hidden_dim));
  if (iterations < 1) throw ConfigError("init_params: iteration count must be >= 1, got " + std::to_string(iterations));
  if (input_dim < 1) throw ConfigError("init_params: input width must be >= 1, got " + std::to_string(input_dim));

  PpgnParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.iterations = iterations;
  p.combination = combination;
  p.activation = activation;
  p.seed = seed;

  RngStream root = RngStream(seed).substream("ppgn");
  int width = input_dim;
  p.widths.push_back(width);
  for (int t = 0; t < iterations; ++t) {
    RngStream layer_rng = root.substream(static_cast<std::uint64_t>(t));
    // Concat keeps phi output at the incoming width so the pair width
    // doubles; product maps everything to the fixed hidden width.
    const int out = combination == Combination::product ? hidden_dim : width;
    PpgnLayerParams layer;
    layer.phi1 = detail::random_dense(layer_rng.substream("phi1"), out, width, activation);
    layer.phi2 = detail::random_dense(layer_rng.substream("phi2"), out, width, activation);
    layer.phi3 = detail::random_dense(layer_rng.substream("phi3"), out, width, activation);
    p.layers.push_back(std::move(layer));
    width = combination == Combination::product ? out : 2 * out;
    p.widths.push_back(width);
  }
  p.readout = detail::random_dense(root.substream("readout"), hidden_dim, width, activation);
  return p;
}

/// Width prescription for uniform separation on a family of intrinsic
/// dimension d.
inline int recommended_width(int intrinsic_dim) {
  if (intrinsic_dim < 0) throw ConfigError("recommended_width: dimension must be >= 0");
  return 2 * intrinsic_dim + 1;
}

/// Aggregation step: per output channel d, the matrix product of the
/// phi1- and phi2-transformed channel slices scaled by 1/n, i.e.
/// agg(i1,i2)[d] = (1/n) sum_j phi1(c(i1,j))[d] * phi2(c(j,i2))[d].
///
/// The 1/n is an exact reparametrization (absorbable into the next layer's
/// weights, and the network is parametrized by n anyway); it pins the
/// feature magnitude near the input scale across depth and graph size.
/// Without it the positive-activation sums grow by a factor n per layer and
/// the structural signal between close graphs drops below double-precision
/// resolution at useful sizes.
inline EdgeTensor ppgn_aggregate(const EdgeTensor& c, const DenseLayer& phi1, const DenseLayer& phi2) {
  const EdgeTensor u = apply_layer_to_pairs(phi1, c);
  const EdgeTensor w = apply_layer_to_pairs(phi2, c);
  const double inv_n = 1.0 / c.node_count();
  EdgeTensor out(c.node_count(), phi1.out_dim());
  for (int d = 0; d < out.channels(); ++d) {
    Matrix product = matmul(u.channel(d), w.channel(d));
    for (double& v : product.values()) v *= inv_n;
    out.set_channel(d, product);
  }
  return out;
}

/// One full layer: aggregation followed by the configured combination with
/// phi3 of the previous features.
inline EdgeTensor ppgn_layer(const EdgeTensor& c, const PpgnLayerParams& layer, Combination combination) {
  if (c.channels() != layer.phi1.in_dim())
    throw DimensionError("ppgn_layer: input D=" + std::to_string(c.channels()) + " vs phi width " +
                         layer.phi1.weight.shape_string());
  EdgeTensor aggregated = ppgn_aggregate(c, layer.phi1, layer.phi2);
  const EdgeTensor skip = apply_layer_to_pairs(layer.phi3, c);
  if (combination == Combination::product) return hadamard(aggregated, skip);

  EdgeTensor out(c.node_count(), aggregated.channels() + skip.channels());
  for (int i = 0; i < c.node_count(); ++i)
    for (int j = 0; j < c.node_count(); ++j) {
      auto dst = out.pair(i, j);
      auto a = aggregated.pair(i, j);
      auto s = skip.pair(i, j);
      std::size_t d = 0;
      for (double v : a) dst[d++] = v;
      for (double v : s) dst[d++] = v;
    }
  return out;
}

/// Sum of the readout map over all n^2 pairs, in (i,j)-lexicographic order.
inline GlobalFeature readout(const EdgeTensor& c, const DenseLayer& readout_layer) {
  if (c.channels() != readout_layer.in_dim())
    throw DimensionError("readout: input D=" + std::to_string(c.channels()) + " vs weight " +
                         readout_layer.weight.shape_string());
  GlobalFeature global(static_cast<std::size_t>(readout_layer.out_dim()), 0.0);
  for (int i = 0; i < c.node_count(); ++i)
    for (int j = 0; j < c.node_count(); ++j) {
      const auto y = layer_forward(readout_layer, c.pair(i, j));
      for (std::size_t d = 0; d < global.size(); ++d) global[d] += y[d];
    }
  return global;
}

struct PpgnResult {
  GlobalFeature global;
  EdgeTensor final_pairs;                 // c_(T), consumed by the pooling stack
  std::vector<EdgeTensor> layer_outputs;  // populated only when requested
};

/// Full forward pass: T layers then readout. Set keep_layers to retain every
/// intermediate tensor (memory grows with T).
inline PpgnResult forward(const EdgeTensor& input, const PpgnParams& params, bool keep_layers = false) {
  if (input.channels() != params.input_dim)
    throw DimensionError("forward: input D=" + std::to_string(input.channels()) + " vs configured D=" +
                         std::to_string(params.input_dim));
  EdgeTensor current = input;
  PpgnResult result;
  for (int t = 0; t < params.iterations; ++t) {
    current = ppgn_layer(current, params.layers[static_cast<std::size_t>(t)], params.combination);
    if (keep_layers) result.layer_outputs.push_back(current);
  }
  result.global = readout(current, params.readout);
  result.final_pairs = std::move(current);
  return result;
}

/// Euclidean norm of the difference of the two global features.
inline double separation_gap(const EdgeTensor& ga, const EdgeTensor& gb, const PpgnParams& params) {
  if (ga.channels() != gb.channels())
    throw DimensionError("separation_gap: channel mismatch " + std::to_string(ga.channels()) + " vs " +
                         std::to_string(gb.channels()));
  const GlobalFeature fa = forward(ga, params).global;
  const GlobalFeature fb = forward(gb, params).global;
  double sum = 0.0;
  for (std::size_t d = 0; d < fa.size(); ++d) sum += (fa[d] - fb[d]) * (fa[d] - fb[d]);
  return std::sqrt(sum);
}

/// Gap normalized by the larger feature magnitude; the decision quantity for
/// separation verdicts, robust to the overall output scale.
inline double relative_separation_gap(const EdgeTensor& ga, const EdgeTensor& gb, const PpgnParams& params) {
  const GlobalFeature fa = forward(ga, params).global;
  const GlobalFeature fb = forward(gb, params).global;
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t d = 0; d < fa.size(); ++d) {
    diff += (fa[d] - fb[d]) * (fa[d] - fb[d]);
    na += fa[d] * fa[d];
    nb += fb[d] * fb[d];
  }
  const double scale = std::max({1.0, std::sqrt(na), std::sqrt(nb)});
  return std::sqrt(diff) / scale;
}

/// Flat view of every weight and bias, in a fixed traversal order. Used by
/// the finite-difference smoothness checks.
inline std::vector<double> parameter_vector(const PpgnParams& params) {
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  auto push = [&flat](const DenseLayer& l) {
    auto w = l.weight.values();
    flat.insert(flat.end(), w.begin(), w.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  };
  for (const auto& layer : params.layers) {
    push(layer.phi1);
    push(layer.phi2);
    push(layer.phi3);
  }
  push(params.readout);
  return flat;
}

/// Inverse of parameter_vector; the flat vector length must match.
inline void set_parameter_vector(PpgnParams& params, std::span<const double> flat) {
  if (flat.size() != params.parameter_count())
    throw DimensionError("set_parameter_vector: " + std::to_string(flat.size()) + " values vs " +
                         std::to_string(params.parameter_count()) + " parameters");
  std::size_t pos = 0;
  auto pull = [&](DenseLayer& l) {
    auto w = l.weight.values();
    for (double& v : w) v = flat[pos++];
    for (double& v : l.bias) v = flat[pos++];
  };
  for (auto& layer : params.layers) {
    pull(layer.phi1);
    pull(layer.phi2);
    pull(layer.phi3);
  }
  pull(params.readout);
}

}  // namespace welwl
