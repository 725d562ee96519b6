#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "welwl/error.hpp"
#include "welwl/rng.hpp"
#include "welwl/tensor.hpp"
#include "welwl/wl.hpp"

namespace welwl {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;  // rows

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline Vec3 apply(const Mat3& m, const Vec3& v) {
  return {dot(m[0], v), dot(m[1], v), dot(m[2], v)};
}

inline Mat3 matmul3(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] * b[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = s;
    }
  return c;
}

inline Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

inline double det3(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

/// Frobenius norm of R^T R - I; zero for orthogonal R.
inline double orthogonality_defect(const Mat3& r) {
  double defect = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
      const double target = (i == j) ? 1.0 : 0.0;
      defect += (s - target) * (s - target);
    }
  return std::sqrt(defect);
}

/// A cloud of n points in R^3. n = 0 is rejected at construction.
struct PointCloud {
  std::vector<Vec3> points;

  int n() const { return static_cast<int>(points.size()); }
};

inline PointCloud make_point_cloud(std::vector<Vec3> points) {
  if (points.empty()) throw ConfigError("PointCloud: n must be positive");
  for (const Vec3& p : points)
    for (double v : p)
      if (!std::isfinite(v)) throw ConfigError("PointCloud: non-finite coordinate");
  return PointCloud{std::move(points)};
}

/// Positions and velocities sharing one index correspondence: the multiset
/// element is the pair (x_i, v_i).
struct PosVel {
  PointCloud x;
  PointCloud v;

  int n() const { return x.n(); }
};

inline PosVel make_posvel(PointCloud x, PointCloud v) {
  if (x.n() != v.n())
    throw DimensionError("PosVel: positions n=" + std::to_string(x.n()) + " vs velocities n=" + std::to_string(v.n()));
  return PosVel{std::move(x), std::move(v)};
}

/// Rigid motion: orthogonal R (proper or improper) plus a translation.
struct EuclideanMotion {
  Mat3 rotation = identity3();
  Vec3 translation = {0, 0, 0};
};

inline EuclideanMotion make_motion(const Mat3& rotation, const Vec3& translation) {
  const double defect = orthogonality_defect(rotation);
  if (!(defect <= 1e-12))
    throw ConfigError("EuclideanMotion: rotation not orthogonal, defect " + std::to_string(defect));
  return EuclideanMotion{rotation, translation};
}

/// Bijection on [n]; validated at construction.
struct PermutationMap {
  std::vector<int> map;  // new index i takes old index map[i]

  int n() const { return static_cast<int>(map.size()); }
  int operator()(int i) const { return map[static_cast<std::size_t>(i)]; }
};

inline PermutationMap make_permutation(std::vector<int> map) {
  std::vector<bool> seen(map.size(), false);
  for (int v : map) {
    if (v < 0 || v >= static_cast<int>(map.size()) || seen[static_cast<std::size_t>(v)])
      throw ConfigError("PermutationMap: not a bijection on [n]");
    seen[static_cast<std::size_t>(v)] = true;
  }
  return PermutationMap{std::move(map)};
}

inline PermutationMap identity_permutation(int n) {
  std::vector<int> map(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) map[static_cast<std::size_t>(i)] = i;
  return PermutationMap{std::move(map)};
}

/// Composition matching apply_motion: applying tau2 after tau1 visits
/// tau1(tau2(i)).
inline PermutationMap compose(const PermutationMap& tau1, const PermutationMap& tau2) {
  std::vector<int> map(tau2.map.size());
  for (std::size_t i = 0; i < map.size(); ++i) map[i] = tau1(tau2.map[i]);
  return PermutationMap{std::move(map)};
}

/// Composition matching apply_motion: m2 applied after m1.
inline EuclideanMotion compose(const EuclideanMotion& m2, const EuclideanMotion& m1) {
  return EuclideanMotion{matmul3(m2.rotation, m1.rotation), apply(m2.rotation, m1.translation) + m2.translation};
}

/// Subtract the barycenter from every point.
inline PointCloud centralize(const PointCloud& cloud) {
  Vec3 mean = {0, 0, 0};
  for (const Vec3& p : cloud.points) mean = mean + p;
  mean = (1.0 / cloud.n()) * mean;
  PointCloud out = cloud;
  for (Vec3& p : out.points) p = p - mean;
  return out;
}

/// Pairwise distance matrix as a 1-channel edge tensor.
inline EdgeTensor encode_positions(const PointCloud& cloud) {
  const int n = cloud.n();
  EdgeTensor t(n, 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t.at(i, j, 0) = distance(cloud.points[static_cast<std::size_t>(i)], cloud.points[static_cast<std::size_t>(j)]);
  return t;
}

/// Number of off-diagonal channels produced by encode_posvel.
inline constexpr int kPosVelChannels = 6;

struct PosVelEncoding {
  EdgeTensor pairs;                   // D = 6
  std::vector<double> node_features;  // |v_i| per node, also on the diagonal
};

/// Weighted-graph encoding of a position-velocity pair.
///
/// Positions are centralized first. The off-diagonal feature of (i,j) holds
/// the six distinct entries of the distance matrix of (x^_i, x^_j, v_i, v_j)
/// in the fixed order
///   [ d(x^_i,x^_j), d(x^_i,v_i), d(x^_i,v_j), d(x^_j,v_i), d(x^_j,v_j), d(v_i,v_j) ].
/// The diagonal of (i,i) carries the node feature |v_i| in channel 0. The
/// encoding is invariant under rotations/reflections and translations and
/// permutation-conjugated under node relabeling.
inline PosVelEncoding encode_posvel(const PosVel& xv) {
  const int n = xv.n();
  const PointCloud xc = centralize(xv.x);
  PosVelEncoding out{EdgeTensor(n, kPosVelChannels), std::vector<double>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) out.node_features[static_cast<std::size_t>(i)] = norm(xv.v.points[static_cast<std::size_t>(i)]);
  for (int i = 0; i < n; ++i) {
    const Vec3& xi = xc.points[static_cast<std::size_t>(i)];
    const Vec3& vi = xv.v.points[static_cast<std::size_t>(i)];
    for (int j = 0; j < n; ++j) {
      auto dst = out.pairs.pair(i, j);
      if (i == j) {
        dst[0] = out.node_features[static_cast<std::size_t>(i)];
        continue;  // remaining channels stay zero
      }
      const Vec3& xj = xc.points[static_cast<std::size_t>(j)];
      const Vec3& vj = xv.v.points[static_cast<std::size_t>(j)];
      dst[0] = distance(xi, xj);
      dst[1] = distance(xi, vi);
      dst[2] = distance(xi, vj);
      dst[3] = distance(xj, vi);
      dst[4] = distance(xj, vj);
      dst[5] = distance(vi, vj);
    }
  }
  return out;
}

/// Group action: x'_i = R x_{tau(i)} + t and v'_i = R v_{tau(i)}.
/// Velocities are rotated but never translated.
inline PosVel apply_motion(const EuclideanMotion& m, const PermutationMap& tau, const PosVel& xv) {
  const int n = xv.n();
  if (tau.n() != n)
    throw DimensionError("apply_motion: permutation on " + std::to_string(tau.n()) + " nodes vs cloud n=" + std::to_string(n));
  PosVel out = xv;
  for (int i = 0; i < n; ++i) {
    out.x.points[static_cast<std::size_t>(i)] = apply(m.rotation, xv.x.points[static_cast<std::size_t>(tau(i))]) + m.translation;
    out.v.points[static_cast<std::size_t>(i)] = apply(m.rotation, xv.v.points[static_cast<std::size_t>(tau(i))]);
  }
  return out;
}

/// Permutation-conjugated view of an edge tensor: out(i,j) = in(tau(i), tau(j)).
inline EdgeTensor permute_pairs(const EdgeTensor& t, const PermutationMap& tau) {
  EdgeTensor out(t.node_count(), t.channels());
  for (int i = 0; i < t.node_count(); ++i)
    for (int j = 0; j < t.node_count(); ++j) {
      auto src = t.pair(tau(i), tau(j));
      auto dst = out.pair(i, j);
      for (int d = 0; d < t.channels(); ++d) dst[static_cast<std::size_t>(d)] = src[static_cast<std::size_t>(d)];
    }
  return out;
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian 3x3 draw, with a
/// sign flip on the last row half the time to cover improper rotations, plus
/// a Gaussian translation.
inline EuclideanMotion random_motion(RngStream rng) {
  Mat3 r{};
  for (int attempt = 0;; ++attempt) {
    for (auto& row : r)
      for (double& v : row) v = rng.gaussian();
    // Gram-Schmidt over rows.
    bool ok = true;
    for (int i = 0; i < 3 && ok; ++i) {
      for (int k = 0; k < i; ++k) {
        const double proj = dot(r[static_cast<std::size_t>(i)], r[static_cast<std::size_t>(k)]);
        r[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)] - proj * r[static_cast<std::size_t>(k)];
      }
      const double len = norm(r[static_cast<std::size_t>(i)]);
      if (len < 1e-8) {
        ok = false;  // nearly dependent draw; retry
        break;
      }
      r[static_cast<std::size_t>(i)] = (1.0 / len) * r[static_cast<std::size_t>(i)];
    }
    if (ok) break;
    if (attempt > 64) throw Error("random_motion: could not orthonormalize");
  }
  if (rng.next_u64() & 1u) r[2] = -1.0 * r[2];
  Vec3 t = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
  return make_motion(r, t);
}

inline EuclideanMotion random_motion(std::uint64_t seed) { return random_motion(RngStream(seed)); }

inline PermutationMap random_permutation(RngStream rng, int n) {
  std::vector<int> map(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) map[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(map[static_cast<std::size_t>(i)], map[rng.bounded(static_cast<std::uint64_t>(i) + 1)]);
  return PermutationMap{std::move(map)};
}

inline PermutationMap random_permutation(std::uint64_t seed, int n) { return random_permutation(RngStream(seed), n); }

namespace detail {

inline void append_i64_be(std::string& out, std::int64_t v) {
  const auto u = static_cast<std::uint64_t>(v);
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((u >> shift) & 0xFF));
}

}  // namespace detail

/// Snap every channel value to round(f / grid) and emit the canonical byte
/// string of the resulting signed integers, bridging continuous features to
/// the exact-equality test. Values whose quantized magnitude exceeds the
/// signed 64-bit range are rejected.
inline WlGraph quantize_tensor(const EdgeTensor& t, double grid) {
  if (!(grid > 0.0)) throw ConfigError("quantize_tensor: grid must be positive");
  WlGraph g = make_wl_graph(t.node_count());
  for (int i = 0; i < t.node_count(); ++i) {
    for (int j = 0; j < t.node_count(); ++j) {
      std::string& bytes = g.feature(i, j);
      bytes.push_back('Q');
      for (int d = 0; d < t.channels(); ++d) {
        const double q = t.at(i, j, d) / grid;
        if (!(std::abs(q) < 9.1e18))
          throw Error("quantize_tensor: value " + std::to_string(t.at(i, j, d)) + " / grid " + std::to_string(grid) +
                      " exceeds the signed 64-bit range");
        detail::append_i64_be(bytes, std::llround(q));
      }
    }
  }
  return g;
}

}  // namespace welwl
