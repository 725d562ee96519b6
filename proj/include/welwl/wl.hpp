#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "welwl/error.hpp"

namespace welwl {

using ColorId = std::uint32_t;

namespace enc {

// Tag bytes for the canonical encodings interned in a ColorTable.
inline constexpr char kInitDiagonal = 'D';
inline constexpr char kInitOffDiagonal = 'E';
inline constexpr char kInitPair = 'P';
inline constexpr char kAggregate = 'A';
inline constexpr char kCombine = 'C';
inline constexpr char kGlobal = 'G';
inline constexpr char kNodeInit = 'N';
inline constexpr char kNodeRefine = 'M';

inline void append_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

inline std::uint32_t read_u32(const std::string& s, std::size_t pos) {
  return (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos])) << 24) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[pos + 3]));
}

}  // namespace enc

/// Injective registry realizing the HASH of the refinement equations: each
/// distinct canonical byte encoding receives a fresh dense id, and two
/// encodings share an id iff they are byte-identical. One table is owned by
/// one refinement session; distinct sessions may run in parallel.
class ColorTable {
public:
  ColorId intern(const std::string& encoding) {
    auto [it, inserted] = ids_.try_emplace(encoding, static_cast<ColorId>(encodings_.size()));
    if (inserted) encodings_.push_back(&it->first);
    return it->second;
  }

  std::size_t size() const { return encodings_.size(); }

  const std::string& encoding(ColorId id) const { return *encodings_.at(id); }

  /// Canonical recursive expansion of an id's defining encoding tree.
  ///
  /// Ids are table-local, but the unfolding is a pure function of the color's
  /// derivation, so unfoldings computed in different tables (or processes)
  /// compare equal exactly when the colors are the same. Intended for small
  /// graphs: the expansion grows quickly with refinement depth.
  std::string unfold(ColorId id) const {
    std::unordered_map<ColorId, std::string> memo;
    return unfold_memo(id, memo);
  }

private:
  std::string unfold_memo(ColorId id, std::unordered_map<ColorId, std::string>& memo) const {
    if (auto it = memo.find(id); it != memo.end()) return it->second;
    const std::string& e = encoding(id);
    std::string out;
    switch (e[0]) {
      case enc::kInitPair:
      case enc::kNodeInit:
        out = e;  // leaf: literal feature bytes
        break;
      case enc::kAggregate: {
        const std::uint32_t count = enc::read_u32(e, 1);
        std::vector<std::string> parts(count);
        for (std::uint32_t k = 0; k < count; ++k) {
          const ColorId a = enc::read_u32(e, 5 + 8 * k);
          const ColorId b = enc::read_u32(e, 5 + 8 * k + 4);
          parts[k] = "(" + unfold_memo(a, memo) + "," + unfold_memo(b, memo) + ")";
        }
        std::sort(parts.begin(), parts.end());
        out = "A{";
        for (const auto& p : parts) out += p;
        out += "}";
        break;
      }
      case enc::kCombine:
        out = "C(" + unfold_memo(enc::read_u32(e, 1), memo) + "," + unfold_memo(enc::read_u32(e, 5), memo) + ")";
        break;
      case enc::kGlobal: {
        const std::uint32_t count = enc::read_u32(e, 1);
        std::vector<std::string> parts(count);
        for (std::uint32_t k = 0; k < count; ++k) parts[k] = unfold_memo(enc::read_u32(e, 5 + 4 * k), memo);
        std::sort(parts.begin(), parts.end());
        out = "G{";
        for (const auto& p : parts) out += p;
        out += "}";
        break;
      }
      case enc::kNodeRefine: {
        const ColorId own = enc::read_u32(e, 1);
        const std::uint32_t count = enc::read_u32(e, 5);
        std::vector<std::string> parts(count);
        for (std::uint32_t k = 0; k < count; ++k) parts[k] = unfold_memo(enc::read_u32(e, 9 + 4 * k), memo);
        std::sort(parts.begin(), parts.end());
        out = "M(" + unfold_memo(own, memo) + ",{";
        for (const auto& p : parts) out += p;
        out += "})";
        break;
      }
      default:
        throw Error("ColorTable::unfold: unknown encoding tag");
    }
    memo.emplace(id, out);
    return out;
  }

  std::unordered_map<std::string, ColorId> ids_;
  std::vector<const std::string*> encodings_;
};

/// Input to the pairwise test: n nodes and a canonical byte string per
/// ordered pair. The diagonal entry (i,i) carries the node feature; the
/// off-diagonal entry (i,j) carries the edge feature.
struct WlGraph {
  int n = 0;
  std::vector<std::string> pair_features;  // row-major over [n]^2

  const std::string& feature(int i, int j) const {
    return pair_features[static_cast<std::size_t>(i) * n + j];
  }
  std::string& feature(int i, int j) { return pair_features[static_cast<std::size_t>(i) * n + j]; }
};

inline WlGraph make_wl_graph(int n) {
  if (n <= 0) throw ConfigError("WlGraph: n must be positive, got " + std::to_string(n));
  WlGraph g;
  g.n = n;
  g.pair_features.assign(static_cast<std::size_t>(n) * n, std::string());
  return g;
}

inline WlGraph permute_wl_graph(const WlGraph& g, const std::vector<int>& tau) {
  WlGraph out = make_wl_graph(g.n);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.n; ++j) out.feature(i, j) = g.feature(tau[static_cast<std::size_t>(i)], tau[static_cast<std::size_t>(j)]);
  return out;
}

/// Per-pair color state after some number of refinement rounds.
struct Coloring {
  int n = 0;
  int round = 0;
  std::vector<ColorId> colors;  // row-major over [n]^2

  ColorId at(int i, int j) const { return colors[static_cast<std::size_t>(i) * n + j]; }
  std::size_t distinct_count() const {
    std::vector<ColorId> sorted = colors;
    std::sort(sorted.begin(), sorted.end());
    return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  }
};

/// Sorted multiset of a coloring's ids; two graphs agree at a round iff
/// these match (within one shared table).
inline std::vector<ColorId> color_multiset(const Coloring& c) {
  std::vector<ColorId> m = c.colors;
  std::sort(m.begin(), m.end());
  return m;
}

/// Initial coloring: each pair's feature bytes, tagged diagonal or
/// off-diagonal so a node feature can never collide with an equal-valued
/// edge feature.
inline Coloring init_coloring(const WlGraph& g, ColorTable& table) {
  Coloring c;
  c.n = g.n;
  c.round = 0;
  c.colors.resize(static_cast<std::size_t>(g.n) * g.n);
  std::string buf;
  for (int i = 0; i < g.n; ++i) {
    for (int j = 0; j < g.n; ++j) {
      buf.clear();
      buf.push_back(enc::kInitPair);
      buf.push_back(i == j ? enc::kInitDiagonal : enc::kInitOffDiagonal);
      buf += g.feature(i, j);
      c.colors[static_cast<std::size_t>(i) * g.n + j] = table.intern(buf);
    }
  }
  return c;
}

/// One pairwise refinement round. The neighborhood multiset of pair (i1,i2)
/// is the n tuples (C(i1,j), C(j,i2)); it is canonicalized by sorting the id
/// pairs lexicographically, hashed, and combined with the pair's previous
/// color.
inline Coloring refine_2wl(const Coloring& c, ColorTable& table) {
  const int n = c.n;
  Coloring next;
  next.n = n;
  next.round = c.round + 1;
  next.colors.resize(c.colors.size());

  std::vector<std::pair<ColorId, ColorId>> tuples(static_cast<std::size_t>(n));
  std::string buf;
  for (int i1 = 0; i1 < n; ++i1) {
    for (int i2 = 0; i2 < n; ++i2) {
      for (int j = 0; j < n; ++j)
        tuples[static_cast<std::size_t>(j)] = {c.at(i1, j), c.at(j, i2)};
      std::sort(tuples.begin(), tuples.end());

      buf.clear();
      buf.push_back(enc::kAggregate);
      enc::append_u32(buf, static_cast<std::uint32_t>(n));
      for (const auto& [a, b] : tuples) {
        enc::append_u32(buf, a);
        enc::append_u32(buf, b);
      }
      const ColorId aggregated = table.intern(buf);

      buf.clear();
      buf.push_back(enc::kCombine);
      enc::append_u32(buf, c.at(i1, i2));
      enc::append_u32(buf, aggregated);
      next.colors[static_cast<std::size_t>(i1) * n + i2] = table.intern(buf);
    }
  }
  return next;
}

/// Hash of the sorted multiset of all n^2 final pair colors.
inline ColorId global_label(const Coloring& c, ColorTable& table) {
  std::vector<ColorId> sorted = color_multiset(c);
  std::string buf;
  buf.push_back(enc::kGlobal);
  enc::append_u32(buf, static_cast<std::uint32_t>(sorted.size()));
  for (ColorId id : sorted) enc::append_u32(buf, id);
  return table.intern(buf);
}

/// Node-coloring state for the 1-dimensional baseline test.
struct NodeColoring {
  int round = 0;
  std::vector<ColorId> colors;
};

/// Initial 1-WL node colors: node feature bytes plus the node degree. The
/// degree is folded in up front so degree-sequence differences show at
/// round 0.
inline NodeColoring init_1wl(const std::vector<std::string>& node_features,
                             const std::vector<std::vector<int>>& adjacency, ColorTable& table) {
  NodeColoring c;
  c.round = 0;
  c.colors.resize(adjacency.size());
  std::string buf;
  for (std::size_t v = 0; v < adjacency.size(); ++v) {
    buf.clear();
    buf.push_back(enc::kNodeInit);
    enc::append_u32(buf, static_cast<std::uint32_t>(adjacency[v].size()));
    if (v < node_features.size()) buf += node_features[v];
    c.colors[v] = table.intern(buf);
  }
  return c;
}

/// Standard node-color refinement by the hashed multiset of neighbor colors.
inline NodeColoring refine_1wl(const NodeColoring& c, const std::vector<std::vector<int>>& adjacency,
                               ColorTable& table) {
  NodeColoring next;
  next.round = c.round + 1;
  next.colors.resize(c.colors.size());
  std::string buf;
  std::vector<ColorId> neighbor_colors;
  for (std::size_t v = 0; v < adjacency.size(); ++v) {
    neighbor_colors.clear();
    for (int u : adjacency[v]) neighbor_colors.push_back(c.colors[static_cast<std::size_t>(u)]);
    std::sort(neighbor_colors.begin(), neighbor_colors.end());
    buf.clear();
    buf.push_back(enc::kNodeRefine);
    enc::append_u32(buf, c.colors[v]);
    enc::append_u32(buf, static_cast<std::uint32_t>(neighbor_colors.size()));
    for (ColorId id : neighbor_colors) enc::append_u32(buf, id);
    next.colors[v] = table.intern(buf);
  }
  return next;
}

/// Outcome of running the pairwise test jointly on two graphs.
struct PairVerdict {
  ColorId label_a = 0;
  ColorId label_b = 0;
  bool separated = false;
  std::optional<int> first_separating_round;  // -1 when sizes differ
  int rounds_run = 0;
};

namespace detail {

inline std::size_t distinct_count(const std::vector<ColorId>& colors) {
  std::vector<ColorId> sorted = colors;
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

// Distinct colors across both graphs jointly. Early termination of a joint
// run must key on the union partition: per-graph partitions can be stable
// while colors still drift apart across graphs.
inline std::size_t joint_distinct_count(const std::vector<ColorId>& a, const std::vector<ColorId>& b) {
  std::vector<ColorId> sorted;
  sorted.reserve(a.size() + b.size());
  sorted.insert(sorted.end(), a.begin(), a.end());
  sorted.insert(sorted.end(), b.begin(), b.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

}  // namespace detail

/// Refine both graphs against one shared table for up to T rounds, stopping
/// early once both partitions are stable (further rounds cannot change the
/// verdict). Unequal node counts separate trivially at round -1.
inline PairVerdict run_2wl_pair(const WlGraph& ga, const WlGraph& gb, int rounds, ColorTable& table) {
  PairVerdict verdict;
  if (ga.n != gb.n) {
    verdict.separated = true;
    verdict.first_separating_round = -1;
    return verdict;
  }

  Coloring ca = init_coloring(ga, table);
  Coloring cb = init_coloring(gb, table);

  auto check = [&](const Coloring& a, const Coloring& b, int round) {
    if (!verdict.separated && color_multiset(a) != color_multiset(b)) {
      verdict.separated = true;
      verdict.first_separating_round = round;
    }
  };
  check(ca, cb, 0);

  for (int t = 0; t < rounds; ++t) {
    const std::size_t before = detail::joint_distinct_count(ca.colors, cb.colors);
    Coloring na = refine_2wl(ca, table);
    Coloring nb = refine_2wl(cb, table);
    const bool stable = detail::joint_distinct_count(na.colors, nb.colors) == before;
    ca = std::move(na);
    cb = std::move(nb);
    check(ca, cb, ca.round);
    if (stable) break;  // fixed point: later rounds preserve the joint partition
  }

  verdict.rounds_run = ca.round;
  verdict.label_a = global_label(ca, table);
  verdict.label_b = global_label(cb, table);
  return verdict;
}

inline PairVerdict run_2wl_pair(const WlGraph& ga, const WlGraph& gb, int rounds) {
  ColorTable table;
  return run_2wl_pair(ga, gb, rounds, table);
}

/// 1-WL analogue of run_2wl_pair, over plain adjacency lists.
inline PairVerdict run_1wl_pair(const std::vector<std::vector<int>>& adj_a,
                                const std::vector<std::vector<int>>& adj_b, int rounds) {
  PairVerdict verdict;
  if (adj_a.size() != adj_b.size()) {
    verdict.separated = true;
    verdict.first_separating_round = -1;
    return verdict;
  }
  ColorTable table;
  const std::vector<std::string> no_features;
  NodeColoring ca = init_1wl(no_features, adj_a, table);
  NodeColoring cb = init_1wl(no_features, adj_b, table);

  auto multiset = [](const NodeColoring& c) {
    std::vector<ColorId> m = c.colors;
    std::sort(m.begin(), m.end());
    return m;
  };
  auto check = [&](int round) {
    if (!verdict.separated && multiset(ca) != multiset(cb)) {
      verdict.separated = true;
      verdict.first_separating_round = round;
    }
  };
  check(0);

  for (int t = 0; t < rounds; ++t) {
    const std::size_t before = detail::joint_distinct_count(ca.colors, cb.colors);
    ca = refine_1wl(ca, adj_a, table);
    cb = refine_1wl(cb, adj_b, table);
    check(ca.round);
    if (detail::joint_distinct_count(ca.colors, cb.colors) == before) break;
  }
  verdict.rounds_run = ca.round;

  std::string buf;
  auto label = [&](const NodeColoring& c) {
    std::vector<ColorId> sorted = multiset(c);
    buf.clear();
    buf.push_back(enc::kGlobal);
    enc::append_u32(buf, static_cast<std::uint32_t>(sorted.size()));
    for (ColorId id : sorted) enc::append_u32(buf, id);
    return table.intern(buf);
  };
  verdict.label_a = label(ca);
  verdict.label_b = label(cb);
  return verdict;
}

/// Iterate refine_2wl until the partition stops changing. The partition of
/// [n]^2 can refine at most n^2 - 1 times, so this terminates within n^2
/// rounds.
inline std::pair<Coloring, int> stable_refinement(const WlGraph& g, ColorTable& table) {
  Coloring c = init_coloring(g, table);
  const int max_rounds = g.n * g.n;
  for (int t = 0; t < max_rounds; ++t) {
    Coloring next = refine_2wl(c, table);
    if (detail::distinct_count(next.colors) == detail::distinct_count(c.colors))
      return {std::move(c), t};
    c = std::move(next);
  }
  return {std::move(c), max_rounds};
}

inline std::pair<Coloring, int> stable_refinement(const WlGraph& g) {
  ColorTable table;
  return stable_refinement(g, table);
}

}  // namespace welwl
