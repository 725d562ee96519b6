#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "welwl/geometry.hpp"
#include "welwl/rng.hpp"

using namespace welwl;

namespace {

PointCloud random_cloud(RngStream rng, int n, double scale = 1.0) {
  std::vector<Vec3> pts(static_cast<std::size_t>(n));
  for (auto& p : pts)
    for (double& v : p) v = scale * rng.gaussian();
  return make_point_cloud(std::move(pts));
}

PosVel random_posvel(RngStream rng, int n) {
  return make_posvel(random_cloud(rng.substream("x"), n), random_cloud(rng.substream("v"), n));
}

double max_abs_diff(const EdgeTensor& a, const EdgeTensor& b) {
  double worst = 0.0;
  auto av = a.values(), bv = b.values();
  for (std::size_t k = 0; k < av.size(); ++k) worst = std::max(worst, std::abs(av[k] - bv[k]));
  return worst;
}

}  // namespace

TEST_CASE("centralize basics") {
  PointCloud single = make_point_cloud({{3.0, -1.0, 2.0}});
  PointCloud origin = centralize(single);
  for (double v : origin.points[0]) CHECK(v == Catch::Approx(0.0).margin(1e-15));

  PointCloud two = make_point_cloud({{0, 0, 0}, {2, 0, 0}});
  PointCloud centered = centralize(two);
  CHECK(centered.points[0][0] == Catch::Approx(-1.0));
  CHECK(centered.points[1][0] == Catch::Approx(1.0));

  // Idempotence and translation equivariance.
  RngStream rng(3);
  PointCloud cloud = random_cloud(rng, 7);
  PointCloud once = centralize(cloud);
  PointCloud twice = centralize(once);
  for (int i = 0; i < 7; ++i)
    for (int a = 0; a < 3; ++a)
      CHECK(std::abs(once.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] -
                     twice.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)]) <= 1e-12);

  Vec3 t = {0.5, -2.0, 4.0};
  PointCloud shifted = cloud;
  for (auto& p : shifted.points) p = p + t;
  PointCloud c2 = centralize(shifted);
  for (int i = 0; i < 7; ++i)
    for (int a = 0; a < 3; ++a)
      CHECK(std::abs(once.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] -
                     c2.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)]) <= 1e-12);

  CHECK_THROWS_AS(make_point_cloud({}), ConfigError);
}

TEST_CASE("encode_positions pinned and oracle cases") {
  PointCloud tri = make_point_cloud({{0, 0, 0}, {3, 4, 0}});
  EdgeTensor t = encode_positions(tri);
  CHECK(t.at(0, 1, 0) == Catch::Approx(5.0));
  CHECK(t.at(1, 0, 0) == Catch::Approx(5.0));
  CHECK(t.at(0, 0, 0) == 0.0);

  PointCloud dup = make_point_cloud({{1, 2, 3}, {1, 2, 3}});
  CHECK(encode_positions(dup).at(0, 1, 0) == 0.0);

  RngStream rng(5);
  PointCloud cloud = random_cloud(rng, 5);
  EdgeTensor enc = encode_positions(cloud);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      double sum = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double d = cloud.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] -
                         cloud.points[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)];
        sum += d * d;
      }
      CHECK(std::abs(enc.at(i, j, 0) - std::sqrt(sum)) <= 1e-14);
    }
}

TEST_CASE("encode_posvel fixed cases") {
  // Zero velocities on a centered cloud: cross distances reduce to norms.
  PointCloud x = make_point_cloud({{1, 0, 0}, {-1, 0, 0}});
  PointCloud v0 = make_point_cloud({{0, 0, 0}, {0, 0, 0}});
  PosVelEncoding enc = encode_posvel(make_posvel(x, v0));
  auto p01 = enc.pairs.pair(0, 1);
  CHECK(p01[0] == Catch::Approx(2.0));
  CHECK(p01[1] == Catch::Approx(1.0));  // |x_0|
  CHECK(p01[2] == Catch::Approx(1.0));
  CHECK(p01[3] == Catch::Approx(1.0));  // |x_1|
  CHECK(p01[4] == Catch::Approx(1.0));
  CHECK(p01[5] == 0.0);
  CHECK(enc.pairs.at(0, 0, 0) == 0.0);
  CHECK(enc.node_features[0] == 0.0);

  // Shared unit velocity along y.
  PointCloud vy = make_point_cloud({{0, 1, 0}, {0, 1, 0}});
  PosVelEncoding enc2 = encode_posvel(make_posvel(x, vy));
  auto q01 = enc2.pairs.pair(0, 1);
  CHECK(q01[0] == Catch::Approx(2.0));
  for (int k = 1; k <= 4; ++k) CHECK(q01[static_cast<std::size_t>(k)] == Catch::Approx(std::sqrt(2.0)));
  CHECK(q01[5] == 0.0);
  CHECK(enc2.pairs.at(0, 0, 0) == Catch::Approx(1.0));
  CHECK(enc2.node_features[1] == Catch::Approx(1.0));
}

TEST_CASE("encode_posvel is motion invariant and permutation conjugated") {
  RngStream rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    RngStream t = rng.substream(static_cast<std::uint64_t>(trial));
    const int n = 2 + static_cast<int>(t.bounded(6));
    PosVel xv = random_posvel(t.substream("cloud"), n);
    EuclideanMotion m = random_motion(t.substream("motion"));
    PermutationMap tau = random_permutation(t.substream("perm"), n);

    // Pure motion: encoding unchanged.
    PosVel moved = apply_motion(m, identity_permutation(n), xv);
    CHECK(max_abs_diff(encode_posvel(moved).pairs, encode_posvel(xv).pairs) <= 1e-10);

    // Pure permutation: encoding conjugated.
    PosVel renamed = apply_motion(EuclideanMotion{}, tau, xv);
    CHECK(max_abs_diff(encode_posvel(renamed).pairs, permute_pairs(encode_posvel(xv).pairs, tau)) <= 1e-12);
  }
}

TEST_CASE("encode_posvel channel symmetry under pair swap") {
  RngStream rng(11);
  PosVel xv = random_posvel(rng, 5);
  EdgeTensor t = encode_posvel(xv).pairs;
  // (i,j) -> (j,i) swaps channels (1,4) and (2,3), fixes 0 and 5.
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      auto ij = t.pair(i, j);
      auto ji = t.pair(j, i);
      CHECK(ij[0] == ji[0]);
      CHECK(ij[1] == ji[4]);
      CHECK(ij[2] == ji[3]);
      CHECK(ij[3] == ji[2]);
      CHECK(ij[4] == ji[1]);
      CHECK(ij[5] == ji[5]);
    }
}

TEST_CASE("apply_motion identity, translation, composition") {
  RngStream rng(13);
  PosVel xv = random_posvel(rng, 6);

  PosVel same = apply_motion(EuclideanMotion{}, identity_permutation(6), xv);
  CHECK(same.x.points == xv.x.points);
  CHECK(same.v.points == xv.v.points);

  EuclideanMotion shift{identity3(), {1.0, -2.0, 0.5}};
  PosVel shifted = apply_motion(shift, identity_permutation(6), xv);
  CHECK(shifted.v.points == xv.v.points);  // velocities are never translated
  CHECK(shifted.x.points[0][0] == xv.x.points[0][0] + 1.0);

  EuclideanMotion m1 = random_motion(rng.substream("m1"));
  EuclideanMotion m2 = random_motion(rng.substream("m2"));
  PermutationMap t1 = random_permutation(rng.substream("t1"), 6);
  PermutationMap t2 = random_permutation(rng.substream("t2"), 6);
  PosVel stepwise = apply_motion(m2, t2, apply_motion(m1, t1, xv));
  PosVel direct = apply_motion(compose(m2, m1), compose(t1, t2), xv);
  for (int i = 0; i < 6; ++i)
    for (int a = 0; a < 3; ++a) {
      CHECK(std::abs(stepwise.x.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] -
                     direct.x.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)]) <= 1e-12);
      CHECK(std::abs(stepwise.v.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] -
                     direct.v.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)]) <= 1e-12);
    }
}

TEST_CASE("random motions are orthogonal with both determinant signs") {
  int improper = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    EuclideanMotion m = random_motion(seed);
    CHECK(orthogonality_defect(m.rotation) <= 1e-12);
    const double det = det3(m.rotation);
    CHECK(std::abs(std::abs(det) - 1.0) <= 1e-12);
    if (det < 0) ++improper;
  }
  CHECK(improper > 300);
  CHECK(improper < 700);

  // Determinism.
  EuclideanMotion a = random_motion(std::uint64_t{1234});
  EuclideanMotion b = random_motion(std::uint64_t{1234});
  CHECK(a.rotation == b.rotation);
  CHECK(a.translation == b.translation);
}

TEST_CASE("permutation validation and determinism") {
  CHECK_THROWS_AS(make_permutation({0, 0, 1}), ConfigError);
  CHECK_THROWS_AS(make_permutation({0, 3, 1}), ConfigError);
  PermutationMap a = random_permutation(std::uint64_t{99}, 8);
  PermutationMap b = random_permutation(std::uint64_t{99}, 8);
  CHECK(a.map == b.map);
}

TEST_CASE("quantize_tensor fixed values and idempotence") {
  EdgeTensor t(2, 1);
  t.at(0, 1, 0) = 5.0;
  t.at(1, 0, 0) = 5.0;
  WlGraph g = quantize_tensor(t, 1e-9);
  // round(5.0 / 1e-9) == 5'000'000'000, big-endian in the byte string.
  const std::string& bytes = g.feature(0, 1);
  REQUIRE(bytes.size() == 9);
  std::int64_t value = 0;
  for (int k = 1; k <= 8; ++k) value = (value << 8) | static_cast<std::uint8_t>(bytes[static_cast<std::size_t>(k)]);
  CHECK(value == 5000000000LL);

  // Grid-aligned tensors quantize identically twice.
  EdgeTensor aligned(3, 2);
  RngStream rng(17);
  for (double& v : aligned.values()) v = static_cast<double>(static_cast<std::int64_t>(rng.bounded(1000)) - 500) * 1e-9;
  WlGraph g1 = quantize_tensor(aligned, 1e-9);
  EdgeTensor rebuilt(3, 2);
  {
    std::size_t idx = 0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int d = 0; d < 2; ++d) {
          const std::string& f = g1.feature(i, j);
          std::int64_t iv = 0;
          for (int k = 0; k < 8; ++k) iv = (iv << 8) | static_cast<std::uint8_t>(f[static_cast<std::size_t>(1 + 8 * d + k)]);
          rebuilt.values()[idx++] = static_cast<double>(iv) * 1e-9;
        }
  }
  WlGraph g2 = quantize_tensor(rebuilt, 1e-9);
  CHECK(g1.pair_features == g2.pair_features);

  // Overflow guard.
  EdgeTensor huge(2, 1);
  huge.at(0, 1, 0) = 1e20;
  CHECK_THROWS_AS(quantize_tensor(huge, 1e-9), Error);
  CHECK_THROWS_AS(quantize_tensor(t, 0.0), ConfigError);
}

TEST_CASE("quantization is invariant under rigid motion at the default grid") {
  RngStream rng(19);
  const double grid = 1e-9;
  for (int trial = 0; trial < 20; ++trial) {
    RngStream t = rng.substream(static_cast<std::uint64_t>(trial));
    const int n = 3 + static_cast<int>(t.bounded(5));
    PosVel xv = random_posvel(t.substream("cloud"), n);
    EuclideanMotion m = random_motion(t.substream("motion"));
    PermutationMap tau = random_permutation(t.substream("perm"), n);
    PosVel moved = apply_motion(m, tau, xv);

    EdgeTensor ea = encode_posvel(xv).pairs;
    EdgeTensor eb = encode_posvel(moved).pairs;

    // The motion perturbs each encoded value by far less than grid/2.
    CHECK(max_abs_diff(permute_pairs(ea, tau), eb) < grid / 2.0);

    auto multiset = [](const WlGraph& g) {
      std::vector<std::string> m = g.pair_features;
      std::sort(m.begin(), m.end());
      return m;
    };
    CHECK(multiset(quantize_tensor(ea, grid)) == multiset(quantize_tensor(eb, grid)));
  }
}

TEST_CASE("quantize_tensor commutes with permutation") {
  RngStream rng(23);
  PosVel xv = random_posvel(rng, 5);
  PermutationMap tau = random_permutation(rng.substream("perm"), 5);
  EdgeTensor enc = encode_posvel(xv).pairs;
  WlGraph direct = quantize_tensor(permute_pairs(enc, tau), 1e-9);
  WlGraph perm = permute_wl_graph(quantize_tensor(enc, 1e-9), tau.map);
  CHECK(direct.pair_features == perm.pair_features);
}

TEST_CASE("non-equivalent clouds are certified by the distance multiset") {
  RngStream rng(29);
  PosVel a = random_posvel(rng.substream("a"), 6);
  PosVel b = random_posvel(rng.substream("b"), 6);
  CHECK(oracle::certified_non_equivalent(a, b));

  EuclideanMotion m = random_motion(rng.substream("m"));
  PosVel moved = apply_motion(m, random_permutation(rng.substream("p"), 6), a);
  CHECK_FALSE(oracle::certified_non_equivalent(a, moved));
}
