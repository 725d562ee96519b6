#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "welwl/error.hpp"
#include "welwl/geometry.hpp"
#include "welwl/ppgn.hpp"
#include "welwl/rng.hpp"
#include "welwl/tensor.hpp"

namespace welwl {

/// A small stack of dense layers.
struct Mlp {
  std::vector<DenseLayer> layers;

  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }

  std::vector<double> forward(std::span<const double> x) const {
    std::vector<double> y(x.begin(), x.end());
    for (const auto& layer : layers) y = layer_forward(layer, y);
    return y;
  }

  double scalar(std::span<const double> x) const {
    const auto y = forward(x);
    if (y.size() != 1)
      throw DimensionError("Mlp::scalar: output width " + std::to_string(y.size()) + ", expected 1");
    return y[0];
  }
};

/// Shape of the coefficient networks. depth 1 is a single shallow layer;
/// depth 2 inserts one hidden layer of the given width.
struct MlpShape {
  int depth = 2;
  int hidden_width = 32;
  Activation activation = {ActivationKind::scaled_softplus, 0.01};
};

inline Mlp random_mlp(RngStream rng, int in_dim, int out_dim, const MlpShape& shape) {
  if (shape.depth < 1) throw ConfigError("random_mlp: depth must be >= 1");
  Mlp mlp;
  int width = in_dim;
  for (int d = 0; d + 1 < shape.depth; ++d) {
    mlp.layers.push_back(detail::random_dense(rng.substream(static_cast<std::uint64_t>(d)), shape.hidden_width, width,
                                              shape.activation));
    width = shape.hidden_width;
  }
  mlp.layers.push_back(
      detail::random_dense(rng.substream("out"), out_dim, width, shape.activation));
  return mlp;
}

/// The six scalar coefficient networks of the pooling layer, all reading a
/// final pair feature.
struct PoolingParams {
  std::array<Mlp, 6> psi;  // psi[0] = coefficient on v_i in the position update, ...
};

inline PoolingParams random_pooling(RngStream rng, int feature_dim, const MlpShape& shape) {
  PoolingParams p;
  for (int k = 0; k < 6; ++k)
    p.psi[static_cast<std::size_t>(k)] = random_mlp(rng.substream(static_cast<std::uint64_t>(k)), feature_dim, 1, shape);
  return p;
}

/// Equivariant pooling: builds vector outputs from invariant pair features
/// and the input vectors;
///   x_i' = x_i + psi1(c(i,i)) v_i + sum_k psi2(c(i,k)) (x_k - x_i)
///               + sum_{k != i} psi3(c(i,k)) v_k
///   v_i' =       psi4(c(i,i)) v_i + sum_k psi5(c(i,k)) (x_k - x_i)
///               + sum_{k != i} psi6(c(i,k)) v_k
/// The k = i term of the (x_k - x_i) sums is identically zero and is kept in
/// the loop.
inline PosVel equivariant_pool(const PosVel& xv, const EdgeTensor& features, const PoolingParams& p) {
  const int n = xv.n();
  if (features.node_count() != n)
    throw DimensionError("equivariant_pool: features n=" + std::to_string(features.node_count()) + " vs cloud n=" +
                         std::to_string(n));
  PosVel out = xv;
  for (int i = 0; i < n; ++i) {
    const Vec3 xi = xv.x.points[static_cast<std::size_t>(i)];
    Vec3 x_new = xi + p.psi[0].scalar(features.pair(i, i)) * xv.v.points[static_cast<std::size_t>(i)];
    Vec3 v_new = p.psi[3].scalar(features.pair(i, i)) * xv.v.points[static_cast<std::size_t>(i)];
    for (int k = 0; k < n; ++k) {
      const auto c_ik = features.pair(i, k);
      const Vec3 rel = xv.x.points[static_cast<std::size_t>(k)] - xi;
      x_new = x_new + p.psi[1].scalar(c_ik) * rel;
      v_new = v_new + p.psi[4].scalar(c_ik) * rel;
      if (k != i) {
        x_new = x_new + p.psi[2].scalar(c_ik) * xv.v.points[static_cast<std::size_t>(k)];
        v_new = v_new + p.psi[5].scalar(c_ik) * xv.v.points[static_cast<std::size_t>(k)];
      }
    }
    out.x.points[static_cast<std::size_t>(i)] = x_new;
    out.v.points[static_cast<std::size_t>(i)] = v_new;
  }
  return out;
}

/// One convolution block: message networks plus the coefficient networks of
/// the position, velocity, and hidden updates.
struct WelConvParams {
  Mlp message;        // (h_i, h_j, e_ij, c(i,j)) -> m_ij
  Mlp coef_x_vel;     // m_i   -> coefficient on v_i in the position update
  Mlp coef_x_rel;     // m_ij  -> coefficient on (x_j - x_i)
  Mlp coef_x_nbrvel;  // m_ij  -> coefficient on v_j
  Mlp coef_v_vel;     // hatted counterparts for the velocity update
  Mlp coef_v_rel;
  Mlp coef_v_nbrvel;
  Mlp hidden_update;  // (h_i, m_i) -> h_i'
};

struct WelConvResult {
  std::vector<std::vector<double>> hidden;
  PosVel xv;
};

/// Per-node hidden states as a flat row-per-node container.
using NodeStates = std::vector<std::vector<double>>;

/// Message-passing convolution:
///   m_ij = phi_e(h_i, h_j, e_ij, c(i,j)),  m_i = sum_j m_ij
///   x_i' = x_i + phi_n(m_i) v_i + sum_j phi_x(m_ij)(x_j - x_i) + sum_{j != i} phi_v(m_ij) v_j
///   v_i' = phi_n^(m_i) v_i + sum_j phi_x^(m_ij)(x_j - x_i) + sum_{j != i} phi_v^(m_ij) v_j
///   h_i' = phi_h(h_i, m_i)
inline WelConvResult welconv(const NodeStates& hidden, const EdgeTensor& edge_features, const EdgeTensor& pair_features,
                             const PosVel& xv, const WelConvParams& p) {
  const int n = xv.n();
  if (static_cast<int>(hidden.size()) != n || edge_features.node_count() != n || pair_features.node_count() != n)
    throw DimensionError("welconv: inconsistent node counts");

  // Messages for all ordered pairs.
  std::vector<std::vector<double>> messages(static_cast<std::size_t>(n) * n);
  std::vector<double> input;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      input.clear();
      const auto& hi = hidden[static_cast<std::size_t>(i)];
      const auto& hj = hidden[static_cast<std::size_t>(j)];
      input.insert(input.end(), hi.begin(), hi.end());
      input.insert(input.end(), hj.begin(), hj.end());
      const auto e = edge_features.pair(i, j);
      input.insert(input.end(), e.begin(), e.end());
      const auto c = pair_features.pair(i, j);
      input.insert(input.end(), c.begin(), c.end());
      messages[static_cast<std::size_t>(i) * n + j] = p.message.forward(input);
    }

  WelConvResult result;
  result.xv = xv;
  result.hidden.resize(static_cast<std::size_t>(n));
  const std::size_t message_dim = messages.front().size();
  std::vector<double> aggregated(message_dim);
  for (int i = 0; i < n; ++i) {
    std::fill(aggregated.begin(), aggregated.end(), 0.0);
    for (int j = 0; j < n; ++j) {
      const auto& m = messages[static_cast<std::size_t>(i) * n + j];
      for (std::size_t d = 0; d < message_dim; ++d) aggregated[d] += m[d];
    }

    const Vec3 xi = xv.x.points[static_cast<std::size_t>(i)];
    Vec3 x_new = xi + p.coef_x_vel.scalar(aggregated) * xv.v.points[static_cast<std::size_t>(i)];
    Vec3 v_new = p.coef_v_vel.scalar(aggregated) * xv.v.points[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      const auto& m = messages[static_cast<std::size_t>(i) * n + j];
      const Vec3 rel = xv.x.points[static_cast<std::size_t>(j)] - xi;
      x_new = x_new + p.coef_x_rel.scalar(m) * rel;
      v_new = v_new + p.coef_v_rel.scalar(m) * rel;
      if (j != i) {
        x_new = x_new + p.coef_x_nbrvel.scalar(m) * xv.v.points[static_cast<std::size_t>(j)];
        v_new = v_new + p.coef_v_nbrvel.scalar(m) * xv.v.points[static_cast<std::size_t>(j)];
      }
    }
    result.xv.x.points[static_cast<std::size_t>(i)] = x_new;
    result.xv.v.points[static_cast<std::size_t>(i)] = v_new;

    input.clear();
    const auto& hi = hidden[static_cast<std::size_t>(i)];
    input.insert(input.end(), hi.begin(), hi.end());
    input.insert(input.end(), aggregated.begin(), aggregated.end());
    result.hidden[static_cast<std::size_t>(i)] = p.hidden_update.forward(input);
  }
  return result;
}

/// The full stack: one shared pair-feature network reused by every
/// convolution, an embedding for raw node features, and L convolution
/// blocks.
struct WelNetParams {
  PpgnParams shared_ppgn;              // input_dim must equal kPosVelChannels
  std::vector<WelConvParams> convs;    // L blocks
  DenseLayer node_embed;               // raw node features -> hidden width
  bool recompute_features = true;      // re-encode (X,V) before every block
  int hidden_dim = 0;
  int message_dim = 0;
  int edge_feature_dim = 0;
  int node_feature_dim = 0;
};

struct WelNetConfig {
  int hidden_dim = 128;      // node state width
  int message_dim = 128;     // message width
  int wl_dim = 32;           // shared pair-feature width
  int wl_iterations = 2;     // refinement depth of the shared network
  int conv_count = 4;
  int node_feature_dim = 1;  // |v_i| by default
  int edge_feature_dim = 1;
  Activation activation = {ActivationKind::scaled_softplus, 0.01};
  MlpShape coef_shape = {};  // shape of every scalar coefficient network
  bool recompute_features = true;
};

inline WelConvParams random_welconv(RngStream rng, const WelNetConfig& cfg, int pair_feature_dim) {
  WelConvParams p;
  const int message_in = 2 * cfg.hidden_dim + cfg.edge_feature_dim + pair_feature_dim;
  MlpShape message_shape{2, cfg.message_dim, cfg.activation};
  p.message = random_mlp(rng.substream("message"), message_in, cfg.message_dim, message_shape);
  p.coef_x_vel = random_mlp(rng.substream("coef_x_vel"), cfg.message_dim, 1, cfg.coef_shape);
  p.coef_x_rel = random_mlp(rng.substream("coef_x_rel"), cfg.message_dim, 1, cfg.coef_shape);
  p.coef_x_nbrvel = random_mlp(rng.substream("coef_x_nbrvel"), cfg.message_dim, 1, cfg.coef_shape);
  p.coef_v_vel = random_mlp(rng.substream("coef_v_vel"), cfg.message_dim, 1, cfg.coef_shape);
  p.coef_v_rel = random_mlp(rng.substream("coef_v_rel"), cfg.message_dim, 1, cfg.coef_shape);
  p.coef_v_nbrvel = random_mlp(rng.substream("coef_v_nbrvel"), cfg.message_dim, 1, cfg.coef_shape);
  MlpShape hidden_shape{2, cfg.hidden_dim, cfg.activation};
  p.hidden_update = random_mlp(rng.substream("hidden"), cfg.hidden_dim + cfg.message_dim, cfg.hidden_dim, hidden_shape);
  return p;
}

inline WelNetParams init_welnet(std::uint64_t seed, const WelNetConfig& cfg) {
  WelNetParams p;
  RngStream root = RngStream(seed).substream("welnet");
  p.shared_ppgn =
      init_params(root.substream("ppgn").next_u64(), kPosVelChannels, cfg.wl_dim, cfg.wl_iterations, cfg.activation);
  p.node_embed = detail::random_dense(root.substream("embed"), cfg.hidden_dim, cfg.node_feature_dim, cfg.activation);
  for (int l = 0; l < cfg.conv_count; ++l)
    p.convs.push_back(random_welconv(root.substream(static_cast<std::uint64_t>(l)), cfg, cfg.wl_dim));
  p.recompute_features = cfg.recompute_features;
  p.hidden_dim = cfg.hidden_dim;
  p.message_dim = cfg.message_dim;
  p.edge_feature_dim = cfg.edge_feature_dim;
  p.node_feature_dim = cfg.node_feature_dim;
  return p;
}

struct WelNetResult {
  PosVel xv;
  NodeStates hidden;
};

/// Forward pass of the stack: encode the current (X,V), run the shared
/// pair-feature network, apply one convolution, repeat. With
/// recompute_features = false the pair features are computed once from the
/// input and reused by every block.
inline WelNetResult welnet_forward(const PosVel& xv, const NodeStates& node_features, const EdgeTensor& edge_features,
                                   const WelNetParams& p) {
  const int n = xv.n();
  if (static_cast<int>(node_features.size()) != n || edge_features.node_count() != n)
    throw DimensionError("welnet_forward: inconsistent node counts");

  WelNetResult state;
  state.xv = xv;
  state.hidden.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    state.hidden[static_cast<std::size_t>(i)] = layer_forward(p.node_embed, node_features[static_cast<std::size_t>(i)]);

  EdgeTensor pair_features;
  bool have_features = false;
  for (const auto& conv : p.convs) {
    if (p.recompute_features || !have_features) {
      pair_features = forward(encode_posvel(state.xv).pairs, p.shared_ppgn).final_pairs;
      have_features = true;
    }
    WelConvResult step = welconv(state.hidden, edge_features, pair_features, state.xv, conv);
    state.hidden = std::move(step.hidden);
    state.xv = std::move(step.xv);
  }
  return state;
}

/// Secant slopes of a scalar function at steps h, h/2, h/4 along selected
/// coordinates, and the convergence ratio of their successive differences.
/// For a function that is smooth at the probed point the central-difference
/// error shrinks by 4 per halving, so the ratio sits near 4; a kink inside
/// the stencil pushes it far away.
struct FiniteDiffReport {
  struct Row {
    int coordinate = 0;
    double slope_h = 0.0;
    double slope_h2 = 0.0;
    double slope_h4 = 0.0;
    double ratio = 0.0;
    bool converged = false;  // slope differences below measurement noise
  };
  std::vector<Row> rows;
};

inline FiniteDiffReport finite_diff_check(const std::function<double(std::span<const double>)>& fn,
                                          std::vector<double> point, std::span<const int> coordinates, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_check: step must be positive");
  FiniteDiffReport report;
  for (int c : coordinates) {
    if (c < 0 || c >= static_cast<int>(point.size()))
      throw ConfigError("finite_diff_check: coordinate " + std::to_string(c) + " out of range");
    const double base = point[static_cast<std::size_t>(c)];
    auto slope = [&](double step) {
      point[static_cast<std::size_t>(c)] = base + step;
      const double fp = fn(point);
      point[static_cast<std::size_t>(c)] = base - step;
      const double fm = fn(point);
      point[static_cast<std::size_t>(c)] = base;
      return (fp - fm) / (2.0 * step);
    };
    FiniteDiffReport::Row row;
    row.coordinate = c;
    row.slope_h = slope(h);
    row.slope_h2 = slope(h / 2.0);
    row.slope_h4 = slope(h / 4.0);
    const double d1 = row.slope_h - row.slope_h2;
    const double d2 = row.slope_h2 - row.slope_h4;
    const double scale = std::max({1.0, std::abs(row.slope_h), std::abs(row.slope_h2), std::abs(row.slope_h4)});
    const double floor = 1e-9 * scale;
    if (std::abs(d1) <= floor && std::abs(d2) <= floor) {
      // Differences are at rounding-noise level: the scheme has converged
      // faster than it can be measured, which only a smooth function does.
      row.converged = true;
      row.ratio = 4.0;
    } else {
      row.ratio = d1 / d2;
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace welwl
