#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "welwl/error.hpp"
#include "welwl/geometry.hpp"
#include "welwl/rng.hpp"
#include "welwl/serialize.hpp"
#include "welwl/tensor.hpp"
#include "welwl/wl.hpp"

namespace welwl {

// ---------------------------------------------------------------------------
// Combinatorial graphs.

/// Canonical byte label for a string-valued pair feature.
inline std::string label_bytes_string(const std::string& s) { return "S" + s; }

/// Canonical byte label for a float-array pair feature: the raw IEEE bit
/// patterns, big-endian, with -0 normalized to +0.
inline std::string label_bytes_floats(const std::vector<double>& values) {
  std::string out = "F";
  for (double v : values) {
    const double normalized = (v == 0.0) ? 0.0 : v;
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(normalized));
    std::memcpy(&bits, &normalized, sizeof(bits));
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<char>((bits >> shift) & 0xFF));
  }
  return out;
}

/// A graph in both representations: byte labels for the exact test and a
/// numeric tensor for the network path. Tensor channels are
/// [edge indicator, diagonal indicator, float label values...].
struct LoadedGraph {
  WlGraph wl;
  EdgeTensor tensor;
  std::vector<std::vector<int>> adjacency;
};

struct GraphPair {
  std::string id;
  LoadedGraph a;
  LoadedGraph b;
};

inline LoadedGraph graph_from_adjacency(int n, const std::vector<std::pair<int, int>>& edges) {
  LoadedGraph g;
  g.wl = make_wl_graph(n);
  g.tensor = EdgeTensor(n, 2);
  g.adjacency.assign(static_cast<std::size_t>(n), {});
  for (auto [u, v] : edges) {
    g.wl.feature(u, v) = label_bytes_string("1");
    g.wl.feature(v, u) = label_bytes_string("1");
    g.tensor.at(u, v, 0) = 1.0;
    g.tensor.at(v, u, 0) = 1.0;
    g.adjacency[static_cast<std::size_t>(u)].push_back(v);
    g.adjacency[static_cast<std::size_t>(v)].push_back(u);
  }
  for (int i = 0; i < n; ++i) g.tensor.at(i, i, 1) = 1.0;
  return g;
}

inline std::vector<std::pair<int, int>> cycle_edge_list(int length, int offset = 0) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < length; ++i) edges.emplace_back(offset + i, offset + (i + 1) % length);
  return edges;
}

/// The hard family: C_{2k} against two disjoint copies of C_k on 2k nodes.
/// Both are 2-regular, so node refinement never tells them apart, while the
/// pairwise test separates them within two rounds.
inline GraphPair gen_cycle_pair(int k) {
  if (k < 3) throw ConfigError("gen_cycle_pair: k must be >= 3, got " + std::to_string(k));
  GraphPair pair;
  pair.id = "cycle_" + std::to_string(k);
  pair.a = graph_from_adjacency(2 * k, cycle_edge_list(2 * k));
  auto edges = cycle_edge_list(k);
  auto second = cycle_edge_list(k, k);
  edges.insert(edges.end(), second.begin(), second.end());
  pair.b = graph_from_adjacency(2 * k, edges);
  return pair;
}

// ---------------------------------------------------------------------------
// Graph-pair ingestion.
//
// One graph object: {"n": int, "pairs": [{"i": int, "j": int,
// "label": string-or-float-array}, ...]}; omitted pairs keep a designated
// absent label. A corpus file is a JSON array of {"id": optional,
// "a": graph, "b": graph} entries.

struct LoadWarning {
  std::size_t entry_index = 0;
  std::string message;
};

inline LoadedGraph graph_from_json(const json& j) {
  const int n = j.at("n").get<int>();
  LoadedGraph g;
  g.wl = make_wl_graph(n);
  g.adjacency.assign(static_cast<std::size_t>(n), {});

  // First pass: find the float-label width, validate indices.
  int float_width = 0;
  for (const auto& entry : j.at("pairs")) {
    const int i = entry.at("i").get<int>();
    const int jdx = entry.at("j").get<int>();
    if (i < 0 || i >= n || jdx < 0 || jdx >= n)
      throw IoError("graph pair (" + std::to_string(i) + "," + std::to_string(jdx) + ") out of range for n=" +
                    std::to_string(n));
    const auto& label = entry.at("label");
    if (label.is_array()) float_width = std::max(float_width, static_cast<int>(label.size()));
  }

  g.tensor = EdgeTensor(n, 2 + float_width);
  for (int i = 0; i < n; ++i) g.tensor.at(i, i, 1) = 1.0;

  for (const auto& entry : j.at("pairs")) {
    const int i = entry.at("i").get<int>();
    const int jdx = entry.at("j").get<int>();
    const auto& label = entry.at("label");
    if (label.is_string()) {
      g.wl.feature(i, jdx) = label_bytes_string(label.get<std::string>());
    } else if (label.is_array()) {
      std::vector<double> values = label.get<std::vector<double>>();
      if (static_cast<int>(values.size()) != float_width)
        throw IoError("graph pair (" + std::to_string(i) + "," + std::to_string(jdx) + ") has " +
                      std::to_string(values.size()) + " floats, expected " + std::to_string(float_width));
      g.wl.feature(i, jdx) = label_bytes_floats(values);
      for (int d = 0; d < float_width; ++d) g.tensor.at(i, jdx, 2 + d) = values[static_cast<std::size_t>(d)];
    } else if (label.is_number()) {
      const double value = label.get<double>();
      g.wl.feature(i, jdx) = label_bytes_floats({value});
      if (float_width >= 1) g.tensor.at(i, jdx, 2) = value;
    } else {
      throw IoError("graph pair (" + std::to_string(i) + "," + std::to_string(jdx) + ") label must be string or numbers");
    }
    if (i != jdx) {
      g.tensor.at(i, jdx, 0) = 1.0;
      g.adjacency[static_cast<std::size_t>(i)].push_back(jdx);
    }
  }
  return g;
}

struct LoadedCorpus {
  std::vector<GraphPair> pairs;
  std::vector<LoadWarning> warnings;
};

/// Parse a corpus file. Individual malformed entries become warnings and are
/// skipped; only a file-level problem (unreadable, not a JSON array) throws.
inline LoadedCorpus load_graph_pairs(const std::string& path) {
  const json j = load_json_file(path);
  if (!j.is_array()) throw IoError("corpus '" + path + "' must be a JSON array of {a, b} objects");
  LoadedCorpus corpus;
  for (std::size_t idx = 0; idx < j.size(); ++idx) {
    const auto& entry = j[idx];
    try {
      GraphPair pair;
      pair.id = entry.value("id", "pair_" + std::to_string(idx));
      pair.a = graph_from_json(entry.at("a"));
      pair.b = graph_from_json(entry.at("b"));
      if (pair.a.wl.n != pair.b.wl.n) {
        corpus.warnings.push_back({idx, "node counts differ (" + std::to_string(pair.a.wl.n) + " vs " +
                                            std::to_string(pair.b.wl.n) + "), pair skipped"});
        continue;
      }
      corpus.pairs.push_back(std::move(pair));
    } catch (const std::exception& e) {
      corpus.warnings.push_back({idx, e.what()});
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Point-cloud corpora.

inline PointCloud gen_random_cloud(RngStream rng, int n, double scale) {
  std::vector<Vec3> pts(static_cast<std::size_t>(n));
  for (auto& p : pts)
    for (double& v : p) v = scale * rng.gaussian();
  return make_point_cloud(std::move(pts));
}

inline PosVel gen_random_posvel(RngStream rng, int n, double scale = 1.0) {
  return make_posvel(gen_random_cloud(rng.substream("positions"), n, scale),
                     gen_random_cloud(rng.substream("velocities"), n, scale));
}

inline PosVel gen_random_posvel(std::uint64_t seed, int n, double scale = 1.0) {
  return gen_random_posvel(RngStream(seed), n, scale);
}

/// A cloud and an equivalent copy under a random motion and relabeling.
inline std::pair<PosVel, PosVel> gen_equivalent_pair(std::uint64_t seed, int n) {
  RngStream rng(seed);
  PosVel base = gen_random_posvel(rng.substream("cloud"), n);
  EuclideanMotion m = random_motion(rng.substream("motion"));
  PermutationMap tau = random_permutation(rng.substream("perm"), n);
  return {base, apply_motion(m, tau, base)};
}

/// A cloud and a copy with one coordinate bumped by epsilon; non-equivalent
/// whenever epsilon dominates the quantization grid.
inline std::pair<PosVel, PosVel> gen_perturbed_pair(std::uint64_t seed, int n, double epsilon) {
  RngStream rng(seed);
  PosVel base = gen_random_posvel(rng.substream("cloud"), n);
  PosVel bumped = base;
  const int node = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n)));
  const int axis = static_cast<int>(rng.bounded(3));
  bumped.x.points[static_cast<std::size_t>(node)][static_cast<std::size_t>(axis)] += epsilon;
  return {base, bumped};
}

// ---------------------------------------------------------------------------
// Charged-particle trajectories.

/// A simulated trajectory: per-step positions and velocities, charges, and
/// conservation diagnostics. The initial (X,V) plus final X form the
/// prediction target of the dynamics task.
struct Trajectory {
  int n = 0;
  int steps = 0;
  double dt = 0.0;
  std::vector<double> charges;                // +-1 per particle
  std::vector<std::vector<Vec3>> positions;   // steps+1 frames
  std::vector<std::vector<Vec3>> velocities;  // steps+1 frames
  double energy_drift = 0.0;                  // |E_final - E_initial| / max(1, |E_initial|)
  Vec3 momentum_initial = {0, 0, 0};
  Vec3 momentum_final = {0, 0, 0};
};

namespace detail {

inline constexpr double kForceSoftening = 1e-2;

// Pairwise Coulomb-style forces, accumulated antisymmetrically so momentum
// is conserved to rounding.
inline std::vector<Vec3> coulomb_forces(const std::vector<Vec3>& x, const std::vector<double>& q) {
  std::vector<Vec3> f(x.size(), Vec3{0, 0, 0});
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const Vec3 rel = x[i] - x[j];
      const double r = norm(rel);
      const double denom = (r + kForceSoftening) * (r + kForceSoftening) * (r + kForceSoftening);
      const Vec3 fij = (q[i] * q[j] / denom) * rel;
      f[i] = f[i] + fij;
      f[j] = f[j] - fij;
    }
  return f;
}

inline double system_energy(const std::vector<Vec3>& x, const std::vector<Vec3>& v, const std::vector<double>& q) {
  double e = 0.0;
  for (const auto& vi : v) e += 0.5 * dot(vi, vi);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double r = norm(x[i] - x[j]);
      const double s = r + kForceSoftening;
      // Potential matching the softened force field: -dU/dr = q_i q_j r / s^3.
      e += q[i] * q[j] * (1.0 / s - kForceSoftening / (2.0 * s * s));
    }
  return e;
}

}  // namespace detail

/// Leapfrog (kick-drift-kick) integration of a given system with a softened
/// Coulomb force.
inline Trajectory simulate_nbody_system(std::vector<Vec3> x, std::vector<Vec3> v, std::vector<double> charges,
                                        int steps, double dt) {
  if (!(dt > 0.0)) throw ConfigError("simulate_nbody: dt must be positive");
  if (x.empty() || steps < 1) throw ConfigError("simulate_nbody: n and steps must be positive");
  if (x.size() != v.size() || x.size() != charges.size())
    throw DimensionError("simulate_nbody: positions, velocities, and charges must agree in length");

  Trajectory traj;
  traj.n = static_cast<int>(x.size());
  traj.steps = steps;
  traj.dt = dt;
  traj.charges = std::move(charges);

  traj.positions.push_back(x);
  traj.velocities.push_back(v);
  for (const auto& vi : v) traj.momentum_initial = traj.momentum_initial + vi;
  const double e0 = detail::system_energy(x, v, traj.charges);

  std::vector<Vec3> f = detail::coulomb_forces(x, traj.charges);
  for (int step = 0; step < steps; ++step) {
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = v[i] + (0.5 * dt) * f[i];
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] + dt * v[i];
    f = detail::coulomb_forces(x, traj.charges);
    for (std::size_t i = 0; i < x.size(); ++i) v[i] = v[i] + (0.5 * dt) * f[i];
    traj.positions.push_back(x);
    traj.velocities.push_back(v);
  }

  for (const auto& vi : traj.velocities.back()) traj.momentum_final = traj.momentum_final + vi;
  const double e1 = detail::system_energy(traj.positions.back(), traj.velocities.back(), traj.charges);
  traj.energy_drift = std::abs(e1 - e0) / std::max(1.0, std::abs(e0));
  return traj;
}

/// Random charged system: +-1 charges, positions uniform in a box, Gaussian
/// velocities; then the leapfrog run.
inline Trajectory simulate_nbody(std::uint64_t seed, int n, int steps, double dt, double box = 2.0) {
  if (n < 1) throw ConfigError("simulate_nbody: n must be positive");
  RngStream rng = RngStream(seed).substream("nbody");
  std::vector<double> charges(static_cast<std::size_t>(n));
  RngStream charge_rng = rng.substream("charges");
  for (double& q : charges) q = (charge_rng.next_u64() & 1u) ? 1.0 : -1.0;

  std::vector<Vec3> x(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
  RngStream pos_rng = rng.substream("positions");
  RngStream vel_rng = rng.substream("velocities");
  for (auto& p : x)
    for (double& c : p) c = box * (pos_rng.uniform() - 0.5);
  for (auto& p : v)
    for (double& c : p) c = 0.5 * vel_rng.gaussian();

  return simulate_nbody_system(std::move(x), std::move(v), std::move(charges), steps, dt);
}

inline double momentum_error(const Trajectory& t) { return norm(t.momentum_final - t.momentum_initial); }

inline json to_json(const Trajectory& t) {
  auto frame = [](const std::vector<Vec3>& pts) {
    json arr = json::array();
    for (const auto& p : pts) arr.push_back(std::vector<double>{p[0], p[1], p[2]});
    return arr;
  };
  return json{{"n", t.n},
              {"steps", t.steps},
              {"dt", t.dt},
              {"charges", t.charges},
              {"initial", json{{"X", frame(t.positions.front())}, {"V", frame(t.velocities.front())}}},
              {"target", json{{"X", frame(t.positions.back())}}},
              {"energy_drift", t.energy_drift},
              {"momentum_initial", std::vector<double>{t.momentum_initial[0], t.momentum_initial[1], t.momentum_initial[2]}},
              {"momentum_final", std::vector<double>{t.momentum_final[0], t.momentum_final[1], t.momentum_final[2]}}};
}

}  // namespace welwl
