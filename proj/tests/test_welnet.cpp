#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "welwl/geometry.hpp"
#include "welwl/ppgn.hpp"
#include "welwl/rng.hpp"
#include "welwl/welnet.hpp"

using namespace welwl;

namespace {

PointCloud random_cloud(RngStream rng, int n) {
  std::vector<Vec3> pts(static_cast<std::size_t>(n));
  for (auto& p : pts)
    for (double& v : p) v = rng.gaussian();
  return make_point_cloud(std::move(pts));
}

PosVel random_posvel(RngStream rng, int n) {
  return make_posvel(random_cloud(rng.substream("x"), n), random_cloud(rng.substream("v"), n));
}

EdgeTensor random_tensor(RngStream rng, int n, int channels) {
  EdgeTensor t(n, channels);
  for (double& v : t.values()) v = rng.gaussian();
  return t;
}

Mlp zero_scalar_mlp(int in_dim) {
  return Mlp{{DenseLayer{Matrix(1, in_dim), {0.0}, {ActivationKind::relu}}}};
}

double max_posvel_diff(const PosVel& a, const PosVel& b) {
  double worst = 0.0;
  for (int i = 0; i < a.n(); ++i)
    for (int axis = 0; axis < 3; ++axis) {
      worst = std::max(worst, std::abs(a.x.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)] -
                                       b.x.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)]));
      worst = std::max(worst, std::abs(a.v.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)] -
                                       b.v.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)]));
    }
  return worst;
}

double posvel_scale(const PosVel& a) {
  double scale = 1.0;
  for (const auto& p : a.x.points)
    for (double v : p) scale = std::max(scale, std::abs(v));
  for (const auto& p : a.v.points)
    for (double v : p) scale = std::max(scale, std::abs(v));
  return scale;
}

NodeStates default_node_features(const PosVel& xv) {
  NodeStates feats(static_cast<std::size_t>(xv.n()));
  for (int i = 0; i < xv.n(); ++i) feats[static_cast<std::size_t>(i)] = {norm(xv.v.points[static_cast<std::size_t>(i)])};
  return feats;
}

WelNetConfig small_config() {
  WelNetConfig cfg;
  cfg.hidden_dim = 6;
  cfg.message_dim = 5;
  cfg.wl_dim = 3;
  cfg.wl_iterations = 1;
  cfg.conv_count = 2;
  cfg.coef_shape = MlpShape{2, 4, {ActivationKind::scaled_softplus, 0.01}};
  return cfg;
}

}  // namespace

TEST_CASE("pooling with a single resting point is the identity on positions") {
  PosVel xv = make_posvel(make_point_cloud({{2.0, -1.0, 0.5}}), make_point_cloud({{0.0, 0.0, 0.0}}));
  EdgeTensor c = random_tensor(RngStream(3), 1, 4);
  PoolingParams p = random_pooling(RngStream(5), 4, MlpShape{});
  PosVel out = equivariant_pool(xv, c, p);
  CHECK(out.x.points == xv.x.points);
  for (double v : out.v.points[0]) CHECK(v == 0.0);
}

TEST_CASE("pooling with zeroed coefficient networks fixes x and kills v") {
  RngStream rng(7);
  PosVel xv = random_posvel(rng, 5);
  EdgeTensor c = random_tensor(rng.substream("c"), 5, 4);
  PoolingParams p;
  for (auto& psi : p.psi) psi = zero_scalar_mlp(4);
  PosVel out = equivariant_pool(xv, c, p);
  CHECK(out.x.points == xv.x.points);
  for (const auto& v : out.v.points)
    for (double coord : v) CHECK(coord == 0.0);
}

TEST_CASE("pooling matches the scalar-loop reference") {
  RngStream rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    RngStream t = rng.substream(static_cast<std::uint64_t>(trial));
    PosVel xv = random_posvel(t.substream("xv"), 4);
    EdgeTensor c = random_tensor(t.substream("c"), 4, 3);
    PoolingParams p = random_pooling(t.substream("p"), 3, MlpShape{2, 5, {ActivationKind::tanh, 0.01}});
    PosVel got = equivariant_pool(xv, c, p);
    PosVel want = oracle::ref_equivariant_pool(xv, c, p);
    CHECK(max_posvel_diff(got, want) <= 1e-12 * posvel_scale(want));
  }
}

TEST_CASE("pooling transforms exactly under the group given invariant features") {
  RngStream rng(13);
  for (int trial = 0; trial < 15; ++trial) {
    RngStream t = rng.substream(static_cast<std::uint64_t>(trial));
    const int n = 2 + static_cast<int>(t.bounded(5));
    PosVel xv = random_posvel(t.substream("xv"), n);
    EdgeTensor c = random_tensor(t.substream("c"), n, 3);
    PoolingParams p = random_pooling(t.substream("p"), 3, MlpShape{1, 0, {ActivationKind::tanh, 0.01}});
    EuclideanMotion m = random_motion(t.substream("m"));
    PermutationMap tau = random_permutation(t.substream("tau"), n);

    PosVel direct = equivariant_pool(apply_motion(m, tau, xv), permute_pairs(c, tau), p);
    PosVel expected = apply_motion(m, tau, equivariant_pool(xv, c, p));
    CHECK(max_posvel_diff(direct, expected) <= 1e-10 * posvel_scale(expected));

    // Velocity outputs ignore pure translations entirely.
    EuclideanMotion shift{identity3(), {t.gaussian(), t.gaussian(), t.gaussian()}};
    PosVel shifted = equivariant_pool(apply_motion(shift, identity_permutation(n), xv), c, p);
    PosVel base = equivariant_pool(xv, c, p);
    for (int i = 0; i < n; ++i)
      for (int axis = 0; axis < 3; ++axis)
        CHECK(std::abs(shifted.v.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)] -
                       base.v.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)]) <= 1e-10);
  }
}

TEST_CASE("welconv zero coefficients leave x fixed and zero v") {
  RngStream rng(17);
  WelNetConfig cfg = small_config();
  PosVel xv = random_posvel(rng, 4);
  WelConvParams p = random_welconv(rng.substream("conv"), cfg, 3);
  p.coef_x_vel = zero_scalar_mlp(cfg.message_dim);
  p.coef_x_rel = zero_scalar_mlp(cfg.message_dim);
  p.coef_x_nbrvel = zero_scalar_mlp(cfg.message_dim);
  p.coef_v_vel = zero_scalar_mlp(cfg.message_dim);
  p.coef_v_rel = zero_scalar_mlp(cfg.message_dim);
  p.coef_v_nbrvel = zero_scalar_mlp(cfg.message_dim);

  NodeStates hidden(4, std::vector<double>(static_cast<std::size_t>(cfg.hidden_dim), 0.25));
  EdgeTensor edge_feats = random_tensor(rng.substream("e"), 4, cfg.edge_feature_dim);
  EdgeTensor pair_feats = random_tensor(rng.substream("c"), 4, 3);
  WelConvResult out = welconv(hidden, edge_feats, pair_feats, xv, p);
  CHECK(out.xv.x.points == xv.x.points);
  for (const auto& v : out.xv.v.points)
    for (double coord : v) CHECK(coord == 0.0);
  CHECK(out.hidden.size() == 4);
  CHECK(out.hidden[0].size() == static_cast<std::size_t>(cfg.hidden_dim));
}

TEST_CASE("welconv matches the scalar-loop reference") {
  RngStream rng(19);
  WelNetConfig cfg = small_config();
  for (int trial = 0; trial < 8; ++trial) {
    RngStream t = rng.substream(static_cast<std::uint64_t>(trial));
    const int n = 3;
    PosVel xv = random_posvel(t.substream("xv"), n);
    WelConvParams p = random_welconv(t.substream("conv"), cfg, 3);
    NodeStates hidden(static_cast<std::size_t>(n));
    for (auto& h : hidden) h = t.substream("h").gaussian_vector(static_cast<std::size_t>(cfg.hidden_dim));
    EdgeTensor edge_feats = random_tensor(t.substream("e"), n, cfg.edge_feature_dim);
    EdgeTensor pair_feats = random_tensor(t.substream("c"), n, 3);

    WelConvResult got = welconv(hidden, edge_feats, pair_feats, xv, p);
    WelConvResult want = oracle::ref_welconv(hidden, edge_feats, pair_feats, xv, p);
    CHECK(max_posvel_diff(got.xv, want.xv) <= 1e-12 * posvel_scale(want.xv));
    for (int i = 0; i < n; ++i)
      for (std::size_t d = 0; d < got.hidden[static_cast<std::size_t>(i)].size(); ++d)
        CHECK(std::abs(got.hidden[static_cast<std::size_t>(i)][d] - want.hidden[static_cast<std::size_t>(i)][d]) <= 1e-12);
  }
}

TEST_CASE("welconv is permutation conjugated") {
  RngStream rng(23);
  WelNetConfig cfg = small_config();
  const int n = 5;
  PosVel xv = random_posvel(rng.substream("xv"), n);
  WelConvParams p = random_welconv(rng.substream("conv"), cfg, 3);
  NodeStates hidden(static_cast<std::size_t>(n));
  for (auto& h : hidden) h = rng.substream("h").gaussian_vector(static_cast<std::size_t>(cfg.hidden_dim));
  EdgeTensor edge_feats = random_tensor(rng.substream("e"), n, cfg.edge_feature_dim);
  EdgeTensor pair_feats = random_tensor(rng.substream("c"), n, 3);
  PermutationMap tau = random_permutation(rng.substream("tau"), n);

  NodeStates hidden_perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) hidden_perm[static_cast<std::size_t>(i)] = hidden[static_cast<std::size_t>(tau(i))];
  WelConvResult direct = welconv(hidden_perm, permute_pairs(edge_feats, tau), permute_pairs(pair_feats, tau),
                                 apply_motion(EuclideanMotion{}, tau, xv), p);
  WelConvResult base = welconv(hidden, edge_feats, pair_feats, xv, p);
  PosVel expected_xv = apply_motion(EuclideanMotion{}, tau, base.xv);
  CHECK(max_posvel_diff(direct.xv, expected_xv) <= 1e-12 * posvel_scale(expected_xv));
  for (int i = 0; i < n; ++i)
    for (std::size_t d = 0; d < direct.hidden[static_cast<std::size_t>(i)].size(); ++d)
      CHECK(std::abs(direct.hidden[static_cast<std::size_t>(i)][d] - base.hidden[static_cast<std::size_t>(tau(i))][d]) <= 1e-12);
}

TEST_CASE("welnet forward with no convolutions is the identity") {
  RngStream rng(29);
  WelNetConfig cfg = small_config();
  cfg.conv_count = 0;
  WelNetParams p = init_welnet(31, cfg);
  PosVel xv = random_posvel(rng, 4);
  EdgeTensor edge_feats = random_tensor(rng.substream("e"), 4, cfg.edge_feature_dim);
  WelNetResult out = welnet_forward(xv, default_node_features(xv), edge_feats, p);
  CHECK(out.xv.x.points == xv.x.points);
  CHECK(out.xv.v.points == xv.v.points);
}

TEST_CASE("welnet forward is equivariant end to end") {
  RngStream rng(31);
  WelNetConfig cfg = small_config();
  WelNetParams params = init_welnet(37, cfg);
  for (int trial = 0; trial < 6; ++trial) {
    RngStream t = rng.substream(static_cast<std::uint64_t>(trial));
    const int n = 4;
    PosVel xv = random_posvel(t.substream("xv"), n);
    EdgeTensor edge_feats = random_tensor(t.substream("e"), n, cfg.edge_feature_dim);
    EuclideanMotion m = random_motion(t.substream("m"));
    PermutationMap tau = random_permutation(t.substream("tau"), n);

    NodeStates feats = default_node_features(xv);
    NodeStates feats_perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) feats_perm[static_cast<std::size_t>(i)] = feats[static_cast<std::size_t>(tau(i))];

    WelNetResult base = welnet_forward(xv, feats, edge_feats, params);
    WelNetResult moved =
        welnet_forward(apply_motion(m, tau, xv), feats_perm, permute_pairs(edge_feats, tau), params);
    PosVel expected = apply_motion(m, tau, base.xv);
    CHECK(max_posvel_diff(moved.xv, expected) <= 1e-8 * posvel_scale(expected));
    for (int i = 0; i < n; ++i)
      for (std::size_t d = 0; d < moved.hidden[static_cast<std::size_t>(i)].size(); ++d)
        CHECK(std::abs(moved.hidden[static_cast<std::size_t>(i)][d] - base.hidden[static_cast<std::size_t>(tau(i))][d]) <= 1e-8);
  }
}

TEST_CASE("reusing initial pair features is available behind the config flag") {
  RngStream rng(37);
  WelNetConfig cfg = small_config();
  cfg.recompute_features = false;
  WelNetParams params = init_welnet(41, cfg);
  PosVel xv = random_posvel(rng, 4);
  EdgeTensor edge_feats = random_tensor(rng.substream("e"), 4, cfg.edge_feature_dim);
  WelNetResult frozen = welnet_forward(xv, default_node_features(xv), edge_feats, params);

  params.recompute_features = true;
  WelNetResult recomputed = welnet_forward(xv, default_node_features(xv), edge_feats, params);
  // Later convolutions see different intermediate clouds, so the variants differ.
  CHECK(max_posvel_diff(frozen.xv, recomputed.xv) > 0.0);
}

TEST_CASE("default architecture shapes instantiate and run") {
  WelNetConfig cfg;  // 4 convolutions, depth-2 refinement, widths 128/32
  CHECK(cfg.conv_count == 4);
  CHECK(cfg.hidden_dim == 128);
  CHECK(cfg.wl_dim == 32);
  CHECK(cfg.wl_iterations == 2);
  CHECK(cfg.activation.kind == ActivationKind::scaled_softplus);
  WelNetParams params = init_welnet(43, cfg);
  CHECK(params.convs.size() == 4);
  CHECK(params.shared_ppgn.input_dim == kPosVelChannels);
  CHECK(params.shared_ppgn.iterations == 2);
  CHECK(params.shared_ppgn.hidden_dim == 32);
  CHECK(params.hidden_dim == 128);

  // Untrained blocks amplify coordinate magnitudes from one convolution to
  // the next, so the forward probe uses a small cloud.
  RngStream rng(43);
  PosVel xv = random_posvel(rng, 3);
  for (auto& p : xv.x.points) p = 0.3 * p;
  for (auto& p : xv.v.points) p = 0.3 * p;
  EdgeTensor edge_feats = random_tensor(rng.substream("e"), 3, cfg.edge_feature_dim);
  WelNetResult out = welnet_forward(xv, default_node_features(xv), edge_feats, params);
  for (const auto& p : out.xv.x.points)
    for (double v : p) CHECK(std::isfinite(v));
}

TEST_CASE("parameter values are independent after copies") {
  WelNetParams a = init_welnet(47, small_config());
  WelNetParams b = a;
  b.shared_ppgn.layers[0].phi1.weight(0, 0) += 5.0;
  CHECK(a.shared_ppgn.layers[0].phi1.weight(0, 0) != b.shared_ppgn.layers[0].phi1.weight(0, 0));
}

TEST_CASE("finite differences flag smooth and kinked functions") {
  // Quadratic: the central difference is exact, so the slope differences sit
  // at rounding noise and the check reports clean convergence.
  auto square = [](std::span<const double> x) { return x[0] * x[0]; };
  const int coords[] = {0};
  FiniteDiffReport r1 = finite_diff_check(square, {1.0}, coords, 1e-3);
  CHECK(r1.rows[0].converged);
  CHECK(r1.rows[0].ratio == Catch::Approx(4.0));

  // Nonzero third derivative: textbook second-order ratio near 4.
  auto expo = [](std::span<const double> x) { return std::exp(x[0]); };
  FiniteDiffReport r2 = finite_diff_check(expo, {0.7}, coords, 1e-2);
  CHECK_FALSE(r2.rows[0].converged);
  CHECK(r2.rows[0].ratio > 3.5);
  CHECK(r2.rows[0].ratio < 4.5);

  // Absolute value probed next to the kink: every stencil straddles it and
  // the ratio leaves the second-order band.
  auto vee = [](std::span<const double> x) { return std::abs(x[0]); };
  const double h = 1e-3;
  FiniteDiffReport r3 = finite_diff_check(vee, {h / 3.0}, coords, h);
  CHECK((r3.rows[0].ratio < 3.5 || r3.rows[0].ratio > 4.5));

  CHECK_THROWS_AS(finite_diff_check(square, {1.0}, coords, 0.0), ConfigError);
}

TEST_CASE("separation gap is second-order smooth in the parameters for softplus") {
  EdgeTensor a(6, 2), b(6, 2);
  for (int i = 0; i < 6; ++i) {
    a.at(i, (i + 1) % 6, 0) = 1.0;
    a.at((i + 1) % 6, i, 0) = 1.0;
    a.at(i, i, 1) = 1.0;
    b.at(i, i, 1) = 1.0;
  }
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i) {
      const int u = 3 * c + i, v = 3 * c + (i + 1) % 3;
      b.at(u, v, 0) = 1.0;
      b.at(v, u, 0) = 1.0;
    }

  PpgnParams params = init_params(2024, 2, 1, 2, {ActivationKind::softplus});
  std::vector<double> flat = parameter_vector(params);
  auto gap_fn = [&](std::span<const double> p) {
    PpgnParams local = params;
    set_parameter_vector(local, p);
    return separation_gap(a, b, local);
  };
  const int coords[] = {0, 3, 7};
  FiniteDiffReport report = finite_diff_check(gap_fn, flat, coords, 1e-3);
  for (const auto& row : report.rows) {
    CHECK(row.ratio > 3.5);
    CHECK(row.ratio < 4.5);
  }
}
