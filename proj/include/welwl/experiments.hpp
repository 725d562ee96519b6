#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "welwl/error.hpp"
#include "welwl/generators.hpp"
#include "welwl/geometry.hpp"
#include "welwl/ppgn.hpp"
#include "welwl/records.hpp"
#include "welwl/rng.hpp"
#include "welwl/welnet.hpp"
#include "welwl/wl.hpp"

namespace welwl {

/// Worker count: explicit value, else the WELWL_WORKERS environment
/// variable, else hardware concurrency.
inline int resolve_workers(int configured) {
  if (configured > 0) return configured;
  if (const char* env = std::getenv("WELWL_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

/// Run fn(0..count-1) across up to `workers` threads. Each index must be
/// independent; results should be written to preallocated slots so the
/// outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  workers = std::min(workers, count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

/// Knobs shared by the experiment drivers; every driver echoes the fields it
/// used into its RunRecord so a run reproduces from the record alone.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int n = 8;
  int width = 1;       // hidden width of the network under test
  int iterations = 2;  // refinement / layer depth
  Activation activation = {ActivationKind::softplus, 0.01};
  Combination combination = Combination::product;
  double grid = 1e-9;
  double gap_threshold = 1e-13;       // absolute separation decision
  double relative_threshold = 1e-10;  // relative decision (equivalence controls)
  double epsilon = 1e-3;              // perturbation magnitude
  double tolerance = 1e-8;            // equivariance bound
  int trials = 100;
  int seeds = 32;      // parameter draws per pair
  int pairs = 200;     // corpus size for uniform separation
  int cycles_max = 10;
  int workers = 0;  // 0 = auto
  std::string out_path;
  std::string format = "csv";
  std::vector<int> bench_sizes = {32, 64, 128};
};

inline json config_echo(const ExperimentConfig& cfg) {
  return json{{"seed", cfg.seed},
              {"n", cfg.n},
              {"width", cfg.width},
              {"iterations", cfg.iterations},
              {"activation", to_string(cfg.activation.kind)},
              {"alpha", cfg.activation.alpha},
              {"combination", to_string(cfg.combination)},
              {"grid", cfg.grid},
              {"gap_threshold", cfg.gap_threshold},
              {"relative_threshold", cfg.relative_threshold},
              {"epsilon", cfg.epsilon},
              {"tolerance", cfg.tolerance},
              {"trials", cfg.trials},
              {"seeds", cfg.seeds},
              {"pairs", cfg.pairs},
              {"cycles_max", cfg.cycles_max},
              // The zero-centered softplus variant is a project definition;
              // echoed so downstream readers know which formula produced the
              // numbers.
              {"scaled_softplus_definition", "softplus(x) - ln(2)"}};
}

namespace detail {

class Stopwatch {
public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Separation experiment: width-`width` network gaps over a graph-pair corpus.

inline RunRecord run_separation_experiment(const ExperimentConfig& cfg, const std::vector<GraphPair>& corpus) {
  if (corpus.empty()) throw ConfigError("run_separation_experiment: corpus is empty");
  detail::Stopwatch watch;

  RunRecord record;
  record.experiment = "separation";
  record.config = config_echo(cfg);
  record.columns = {"trial", "pair", "seed", "activation", "gap", "relative_gap", "separated"};

  const int trial_count = static_cast<int>(corpus.size()) * cfg.seeds;
  record.rows.resize(static_cast<std::size_t>(trial_count));
  std::atomic<int> successes{0};

  parallel_for(trial_count, resolve_workers(cfg.workers), [&](int trial) {
    const int pair_idx = trial / cfg.seeds;
    const int seed_idx = trial % cfg.seeds;
    const GraphPair& pair = corpus[static_cast<std::size_t>(pair_idx)];
    // Keyed by (pair, seed), not by flat trial index, so growing the corpus
    // or the seed count never changes earlier draws.
    const std::uint64_t param_seed = RngStream(cfg.seed)
                                         .substream("separation")
                                         .substream(static_cast<std::uint64_t>(pair_idx))
                                         .substream(static_cast<std::uint64_t>(seed_idx))
                                         .next_u64();
    PpgnParams params = init_params(param_seed, pair.a.tensor.channels(), cfg.width, cfg.iterations, cfg.activation,
                                    cfg.combination);
    const double gap = separation_gap(pair.a.tensor, pair.b.tensor, params);
    const double rel = relative_separation_gap(pair.a.tensor, pair.b.tensor, params);
    const bool separated = gap > cfg.gap_threshold;
    if (separated) successes.fetch_add(1);
    record.rows[static_cast<std::size_t>(trial)] = {std::int64_t{trial},
                                                    pair.id,
                                                    std::int64_t{seed_idx},
                                                    to_string(cfg.activation.kind),
                                                    gap,
                                                    rel,
                                                    std::int64_t{separated ? 1 : 0}};
  });

  record.summary["trials"] = trial_count;
  record.summary["successes"] = successes.load();
  record.summary["success_rate"] = static_cast<double>(successes.load()) / trial_count;
  record.wall_seconds = watch.seconds();
  return record;
}

inline std::vector<GraphPair> cycle_corpus(int k_max) {
  std::vector<GraphPair> corpus;
  for (int k = 3; k <= k_max; ++k) corpus.push_back(gen_cycle_pair(k));
  return corpus;
}

// ---------------------------------------------------------------------------
// Geometric completeness: exact pairwise test on quantized encodings.

inline RunRecord run_geometric_completeness(const ExperimentConfig& cfg) {
  detail::Stopwatch watch;
  RunRecord record;
  record.experiment = "completeness";
  record.config = config_echo(cfg);
  record.columns = {"trial", "kind", "separated", "first_round"};

  const int total = 2 * cfg.trials;
  record.rows.resize(static_cast<std::size_t>(total));
  std::atomic<int> false_separations{0}, missed_separations{0};

  parallel_for(total, resolve_workers(cfg.workers), [&](int trial) {
    const bool equivalent = trial < cfg.trials;
    const int index_in_kind = equivalent ? trial : trial - cfg.trials;
    RngStream rng = RngStream(cfg.seed)
                        .substream(equivalent ? "completeness_equivalent" : "completeness_distinct")
                        .substream(static_cast<std::uint64_t>(index_in_kind));
    std::string kind;
    PosVel a = gen_random_posvel(rng.substream("base"), cfg.n);
    PosVel b = a;
    if (equivalent) {
      kind = "equivalent";
      b = apply_motion(random_motion(rng.substream("motion")), random_permutation(rng.substream("perm"), cfg.n), a);
    } else if (index_in_kind % 2 == 0) {
      kind = "random";
      b = gen_random_posvel(rng.substream("other"), cfg.n);
    } else {
      kind = "perturbed";
      const int node = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(cfg.n)));
      const int axis = static_cast<int>(rng.bounded(3));
      b.x.points[static_cast<std::size_t>(node)][static_cast<std::size_t>(axis)] += cfg.epsilon;
    }

    WlGraph ga = quantize_tensor(encode_posvel(a).pairs, cfg.grid);
    WlGraph gb = quantize_tensor(encode_posvel(b).pairs, cfg.grid);
    ColorTable table;
    PairVerdict verdict = run_2wl_pair(ga, gb, cfg.iterations, table);

    if (equivalent && verdict.separated) false_separations.fetch_add(1);
    if (!equivalent && !verdict.separated) missed_separations.fetch_add(1);
    record.rows[static_cast<std::size_t>(trial)] = {
        std::int64_t{trial}, kind, std::int64_t{verdict.separated ? 1 : 0},
        std::int64_t{verdict.first_separating_round.value_or(-2)}};
  });

  record.summary["trials"] = total;
  record.summary["false_separations"] = false_separations.load();
  record.summary["missed_separations"] = missed_separations.load();
  record.summary["pass"] = (false_separations.load() == 0 && missed_separations.load() == 0) ? 1.0 : 0.0;
  record.wall_seconds = watch.seconds();
  return record;
}

// ---------------------------------------------------------------------------
// Equivariance suite for the full stack.

// Bounded activations keep the untrained stack's output magnitudes O(1), so
// the absolute translation-invariance bound on the velocity output is
// meaningful.
inline WelNetConfig equivariance_welnet_config() {
  WelNetConfig cfg;
  cfg.hidden_dim = 8;
  cfg.message_dim = 8;
  cfg.wl_dim = 4;
  cfg.wl_iterations = 2;
  cfg.conv_count = 2;
  cfg.activation = {ActivationKind::tanh, 0.01};
  cfg.coef_shape = MlpShape{2, 8, {ActivationKind::tanh, 0.01}};
  return cfg;
}

inline RunRecord run_equivariance_suite(const ExperimentConfig& cfg) {
  detail::Stopwatch watch;
  RunRecord record;
  record.experiment = "equivariance";
  record.config = config_echo(cfg);
  record.columns = {"trial", "relative_error", "v_translation_error"};
  record.rows.resize(static_cast<std::size_t>(cfg.trials));

  const WelNetConfig net_cfg = equivariance_welnet_config();

  parallel_for(cfg.trials, resolve_workers(cfg.workers), [&](int trial) {
    RngStream rng = RngStream(cfg.seed).substream("equivariance").substream(static_cast<std::uint64_t>(trial));
    WelNetParams params = init_welnet(rng.substream("params").next_u64(), net_cfg);
    PosVel xv = gen_random_posvel(rng.substream("cloud"), cfg.n);
    EdgeTensor edge_feats(cfg.n, net_cfg.edge_feature_dim);
    {
      RngStream er = rng.substream("edges");
      for (double& v : edge_feats.values()) v = er.gaussian();
    }
    NodeStates feats(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) feats[static_cast<std::size_t>(i)] = {norm(xv.v.points[static_cast<std::size_t>(i)])};

    EuclideanMotion m = random_motion(rng.substream("motion"));
    PermutationMap tau = random_permutation(rng.substream("perm"), cfg.n);
    NodeStates feats_perm(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) feats_perm[static_cast<std::size_t>(i)] = feats[static_cast<std::size_t>(tau(i))];

    WelNetResult base = welnet_forward(xv, feats, edge_feats, params);
    WelNetResult moved = welnet_forward(apply_motion(m, tau, xv), feats_perm, permute_pairs(edge_feats, tau), params);
    PosVel expected = apply_motion(m, tau, base.xv);

    double scale = 1.0, diff = 0.0;
    for (int i = 0; i < cfg.n; ++i)
      for (int axis = 0; axis < 3; ++axis) {
        const auto idx = static_cast<std::size_t>(i);
        const auto ax = static_cast<std::size_t>(axis);
        scale = std::max({scale, std::abs(expected.x.points[idx][ax]), std::abs(expected.v.points[idx][ax])});
        diff = std::max({diff, std::abs(moved.xv.x.points[idx][ax] - expected.x.points[idx][ax]),
                         std::abs(moved.xv.v.points[idx][ax] - expected.v.points[idx][ax])});
      }
    const double rel_error = diff / scale;

    // Pure translation must leave the velocity output bit-for-bit stable up
    // to rounding in the encoding path.
    EuclideanMotion shift{identity3(), {rng.gaussian(), rng.gaussian(), rng.gaussian()}};
    WelNetResult shifted = welnet_forward(apply_motion(shift, identity_permutation(cfg.n), xv), feats, edge_feats, params);
    double v_err = 0.0;
    for (int i = 0; i < cfg.n; ++i)
      for (int axis = 0; axis < 3; ++axis)
        v_err = std::max(v_err, std::abs(shifted.xv.v.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)] -
                                         base.xv.v.points[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)]));

    record.rows[static_cast<std::size_t>(trial)] = {std::int64_t{trial}, rel_error, v_err};
  });

  double max_rel = 0.0, max_verr = 0.0;
  for (const auto& row : record.rows) {
    max_rel = std::max(max_rel, std::get<double>(row[1]));
    max_verr = std::max(max_verr, std::get<double>(row[2]));
  }
  record.summary["max_relative_error"] = max_rel;
  record.summary["max_v_translation_error"] = max_verr;
  record.summary["pass"] = (max_rel <= cfg.tolerance && max_verr <= 1e-10) ? 1.0 : 0.0;
  record.wall_seconds = watch.seconds();
  return record;
}

// ---------------------------------------------------------------------------
// Uniform separation: one fixed parameter draw, width 12n+1, depth 5.

inline RunRecord run_uniform_separation(const ExperimentConfig& cfg) {
  detail::Stopwatch watch;
  RunRecord record;
  record.experiment = "uniform_separation";
  record.config = config_echo(cfg);
  record.columns = {"trial", "kind", "relative_gap", "separated"};

  const int equivalent_count = cfg.pairs / 4;
  const int total = cfg.pairs + equivalent_count;
  record.rows.resize(static_cast<std::size_t>(total));

  const int width = recommended_width(6 * cfg.n);
  const PpgnParams params = init_params(RngStream(cfg.seed).substream("uniform_params").next_u64(), kPosVelChannels,
                                        width, cfg.iterations, cfg.activation, cfg.combination);

  std::atomic<int> missed{0}, spurious{0};
  parallel_for(total, resolve_workers(cfg.workers), [&](int trial) {
    const bool equivalent = trial >= cfg.pairs;
    const int index_in_kind = equivalent ? trial - cfg.pairs : trial;
    RngStream rng = RngStream(cfg.seed)
                        .substream(equivalent ? "uniform_equivalent" : "uniform_distinct")
                        .substream(static_cast<std::uint64_t>(index_in_kind));
    PosVel a = gen_random_posvel(rng.substream("a"), cfg.n);
    PosVel b = equivalent ? apply_motion(random_motion(rng.substream("motion")),
                                         random_permutation(rng.substream("perm"), cfg.n), a)
                          : gen_random_posvel(rng.substream("b"), cfg.n);
    const double rel = relative_separation_gap(encode_posvel(a).pairs, encode_posvel(b).pairs, params);
    const bool separated = rel > cfg.relative_threshold;
    if (equivalent && separated) spurious.fetch_add(1);
    if (!equivalent && !separated) missed.fetch_add(1);
    record.rows[static_cast<std::size_t>(trial)] = {std::int64_t{trial}, equivalent ? "equivalent" : "random", rel,
                                                    std::int64_t{separated ? 1 : 0}};
  });

  record.summary["width"] = width;
  record.summary["missed_separations"] = missed.load();
  record.summary["false_separations"] = spurious.load();
  record.summary["pass"] = (missed.load() == 0 && spurious.load() == 0) ? 1.0 : 0.0;
  record.wall_seconds = watch.seconds();
  return record;
}

// ---------------------------------------------------------------------------
// Layer-time scaling.

/// Median wall time of one aggregation+combination layer at each size.
///
/// The quantity of interest is the cubic matrix-product term. The per-pair
/// map evaluations are an O(n^2) side cost, but a transcendental activation
/// makes that term large enough to dilute the measured exponent at benchmark
/// sizes, so the benchmark runs with the piecewise-linear activation.
inline RunRecord run_scaling_benchmark(const ExperimentConfig& cfg, int repetitions = 21) {
  detail::Stopwatch watch;
  RunRecord record;
  record.experiment = "scaling";
  record.config = config_echo(cfg);
  record.columns = {"n", "median_seconds", "repetitions"};

  const int channels = 4;
  const Activation bench_activation{ActivationKind::relu, 0.01};
  record.config["activation"] = to_string(bench_activation.kind);

  const PpgnParams params = init_params(cfg.seed, channels, channels, 1, bench_activation);
  std::vector<EdgeTensor> inputs;
  for (int n : cfg.bench_sizes) {
    EdgeTensor input(n, channels);
    RngStream rng = RngStream(cfg.seed).substream("bench").substream(static_cast<std::uint64_t>(n));
    for (double& v : input.values()) v = rng.gaussian();
    ppgn_layer(input, params.layers[0], params.combination);  // warm up
    inputs.push_back(std::move(input));
  }

  // Sizes are sampled interleaved, one full sweep per repetition, and the
  // ratios are taken per sweep before the median. Adjacent sampling cancels
  // slow machine drift that independent per-size medians pick up. The
  // untimed run before each timed one rebuilds the cache state for that
  // size, so the sizes do not perturb each other.
  std::vector<std::vector<double>> times(cfg.bench_sizes.size());
  for (int rep = 0; rep < repetitions; ++rep) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      ppgn_layer(inputs[k], params.layers[0], params.combination);
      detail::Stopwatch t;
      EdgeTensor out = ppgn_layer(inputs[k], params.layers[0], params.combination);
      times[k].push_back(t.seconds());
      if (!std::isfinite(out.at(0, 0, 0))) throw Error("scaling benchmark produced non-finite output");
    }
  }

  auto median_of = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  for (std::size_t k = 0; k < inputs.size(); ++k)
    record.add_row({std::int64_t{cfg.bench_sizes[k]}, median_of(times[k]), std::int64_t{repetitions}});

  for (std::size_t k = 1; k < inputs.size(); ++k) {
    std::vector<double> ratios;
    for (int rep = 0; rep < repetitions; ++rep)
      ratios.push_back(times[k][static_cast<std::size_t>(rep)] / times[k - 1][static_cast<std::size_t>(rep)]);
    const std::string key =
        "ratio_" + std::to_string(cfg.bench_sizes[k]) + "_over_" + std::to_string(cfg.bench_sizes[k - 1]);
    record.summary[key] = median_of(ratios);
  }
  record.wall_seconds = watch.seconds();
  return record;
}

}  // namespace welwl
