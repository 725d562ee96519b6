// Experiment driver for the point-cloud refinement library. Subcommands run
// the exact pairwise test, the separation and completeness experiments, the
// equivariance and uniform-separation suites, the trajectory generator, and
// the layer-time benchmark.
//
// Exit codes: 0 when every checked threshold is met, 1 on a threshold
// violation (failing rows are listed), 2 on input or configuration errors.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "welwl/experiments.hpp"
#include "welwl/generators.hpp"
#include "welwl/records.hpp"
#include "welwl/serialize.hpp"
#include "welwl/wl.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitThreshold = 1;
constexpr int kExitUsage = 2;

void emit(const welwl::RunRecord& record, const std::string& path, const std::string& format) {
  if (!path.empty()) {
    welwl::save_record(record, path, format);
    std::cout << "wrote " << path << " (" << format << ", " << record.rows.size() << " rows)\n";
  }
  std::cout << "summary:";
  for (const auto& [key, value] : record.summary) std::cout << " " << key << "=" << value;
  std::cout << "\n";
}

int list_failures(const welwl::RunRecord& record, const std::string& flag_column, std::int64_t bad_value) {
  int listed = 0;
  for (std::size_t r = 0; r < record.rows.size(); ++r) {
    for (std::size_t c = 0; c < record.columns.size(); ++c) {
      if (record.columns[c] != flag_column) continue;
      if (std::get<std::int64_t>(record.rows[r][c]) == bad_value) {
        std::ostringstream line;
        for (std::size_t k = 0; k < record.columns.size(); ++k) {
          if (k) line << " ";
          line << record.columns[k] << "=" << welwl::detail::cell_to_string(record.rows[r][k]);
        }
        std::cout << "FAIL row " << r << ": " << line.str() << "\n";
        ++listed;
      }
    }
    if (listed >= 20) {
      std::cout << "... further failing rows suppressed\n";
      break;
    }
  }
  return listed;
}

std::vector<int> parse_sizes(const std::string& csv) {
  std::vector<int> sizes;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) sizes.push_back(std::stoi(token));
  if (sizes.empty()) throw welwl::ConfigError("--sizes: no sizes given");
  return sizes;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2-WL refinement, PPGN separation, and equivariant pooling experiments"};
  app.require_subcommand(1);

  welwl::ExperimentConfig cfg;
  std::string activation_name = "softplus";
  std::string combination_name = "product";
  double alpha = 0.01;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", cfg.seed, "root seed for all randomness");
    cmd->add_option("--workers", cfg.workers, "worker threads (0 = auto, env WELWL_WORKERS overrides)");
    cmd->add_option("--out", cfg.out_path, "output file for the run record");
    cmd->add_option("--format", cfg.format, "output format: csv or json")->check(CLI::IsMember({"csv", "json"}));
  };

  // wl-test -------------------------------------------------------------
  auto* wl_cmd = app.add_subcommand("wl-test", "exact pairwise refinement test on two graph files");
  std::vector<std::string> pair_paths;
  int wl_rounds = 2;
  std::string expect;
  wl_cmd->add_option("--pair", pair_paths, "two graph JSON files")->expected(2)->required();
  wl_cmd->add_option("--rounds", wl_rounds, "refinement rounds (default 2)");
  wl_cmd->add_option("--expect", expect, "assert the verdict: separated or equivalent")
      ->check(CLI::IsMember({"separated", "equivalent"}));

  // separate ------------------------------------------------------------
  auto* sep_cmd = app.add_subcommand("separate", "width-limited network separation gaps over a graph-pair corpus");
  std::string corpus_dir;
  int cycles_max = 0;
  sep_cmd->add_option("--corpus", corpus_dir, "directory of corpus JSON files");
  sep_cmd->add_option("--cycles", cycles_max, "use the cycle-pair family k=3..KMAX");
  sep_cmd->add_option("--width", cfg.width, "hidden width (default 1)");
  sep_cmd->add_option("--rounds", cfg.iterations, "layer count (default 2)");
  sep_cmd->add_option("--activation", activation_name, "activation name");
  sep_cmd->add_option("--alpha", alpha, "slope parameter for leaky activations");
  sep_cmd->add_option("--combination", combination_name, "product or concat");
  sep_cmd->add_option("--seeds", cfg.seeds, "parameter draws per pair (default 32)");
  sep_cmd->add_option("--threshold", cfg.gap_threshold, "separation gap threshold (default 1e-13)");
  add_common(sep_cmd);

  // complete --------------------------------------------------------------
  auto* comp_cmd = app.add_subcommand("complete", "quantized position-velocity completeness check");
  comp_cmd->add_option("--n", cfg.n, "points per cloud (default 8)");
  comp_cmd->add_option("--trials", cfg.trials, "pairs per class (default 100)");
  comp_cmd->add_option("--grid", cfg.grid, "quantization grid (default 1e-9)");
  comp_cmd->add_option("--rounds", cfg.iterations, "refinement rounds (default 3)");
  comp_cmd->add_option("--epsilon", cfg.epsilon, "perturbation size (default 1e-3)");
  add_common(comp_cmd);

  // equivariance ------------------------------------------------------------
  auto* equi_cmd = app.add_subcommand("equivariance", "end-to-end equivariance of the pooling stack");
  equi_cmd->add_option("--n", cfg.n, "points per cloud (default 6)");
  equi_cmd->add_option("--trials", cfg.trials, "random group elements (default 50)");
  equi_cmd->add_option("--tol", cfg.tolerance, "relative error bound (default 1e-8)");
  add_common(equi_cmd);

  // uniform -----------------------------------------------------------------
  auto* uni_cmd = app.add_subcommand("uniform", "fixed-parameter uniform separation at width 12n+1");
  uni_cmd->add_option("--n", cfg.n, "points per cloud (default 4)");
  uni_cmd->add_option("--pairs", cfg.pairs, "non-equivalent pairs (default 200; plus pairs/4 equivalent controls)");
  uni_cmd->add_option("--rounds", cfg.iterations, "layer count (default 5)");
  uni_cmd->add_option("--activation", activation_name, "activation name");
  add_common(uni_cmd);

  // nbody-gen -----------------------------------------------------------------
  auto* nbody_cmd = app.add_subcommand("nbody-gen", "generate a charged-particle trajectory");
  int nbody_n = 5, nbody_steps = 1000;
  double nbody_dt = 1e-3, nbody_box = 2.0;
  std::string nbody_out;
  nbody_cmd->add_option("--n", nbody_n, "particle count (default 5)");
  nbody_cmd->add_option("--steps", nbody_steps, "integration steps (default 1000)");
  nbody_cmd->add_option("--dt", nbody_dt, "time step (default 1e-3)");
  nbody_cmd->add_option("--box", nbody_box, "initial position box width (default 2.0)");
  nbody_cmd->add_option("--seed", cfg.seed, "root seed");
  nbody_cmd->add_option("--out", nbody_out, "trajectory JSON output")->required();

  // bench ---------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand("bench", "layer wall-time scaling across sizes");
  std::string sizes_csv = "32,64,128";
  std::string expect_band;
  bench_cmd->add_option("--sizes", sizes_csv, "comma-separated sizes (default 32,64,128)");
  bench_cmd->add_option("--expect-ratio", expect_band, "assert each consecutive ratio in MIN:MAX");
  add_common(bench_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.activation = welwl::Activation{welwl::activation_kind_from_string(activation_name), alpha};
    cfg.combination = welwl::combination_from_string(combination_name);

    if (wl_cmd->parsed()) {
      const welwl::LoadedGraph a = welwl::graph_from_json(welwl::load_json_file(pair_paths[0]));
      const welwl::LoadedGraph b = welwl::graph_from_json(welwl::load_json_file(pair_paths[1]));
      welwl::ColorTable table;
      const welwl::PairVerdict verdict = welwl::run_2wl_pair(a.wl, b.wl, wl_rounds, table);
      std::cout << "n_a=" << a.wl.n << " n_b=" << b.wl.n << " rounds_requested=" << wl_rounds
                << " rounds_run=" << verdict.rounds_run << " separated=" << (verdict.separated ? "true" : "false");
      if (verdict.first_separating_round)
        std::cout << " first_separating_round=" << *verdict.first_separating_round;
      std::cout << "\n";
      if (!expect.empty()) {
        const bool want_separated = expect == "separated";
        if (verdict.separated != want_separated) {
          std::cout << "expectation '" << expect << "' not met\n";
          return kExitThreshold;
        }
      }
      return kExitOk;
    }

    if (sep_cmd->parsed()) {
      std::vector<welwl::GraphPair> corpus;
      if (cycles_max >= 3) {
        corpus = welwl::cycle_corpus(cycles_max);
        cfg.cycles_max = cycles_max;
      } else if (!corpus_dir.empty()) {
        for (const auto& entry : std::filesystem::directory_iterator(corpus_dir)) {
          if (entry.path().extension() != ".json") continue;
          welwl::LoadedCorpus loaded = welwl::load_graph_pairs(entry.path().string());
          for (const auto& warning : loaded.warnings)
            std::cerr << "warning: " << entry.path().string() << " entry " << warning.entry_index << ": "
                      << warning.message << "\n";
          for (auto& pair : loaded.pairs) corpus.push_back(std::move(pair));
        }
      } else {
        std::cerr << "separate: provide --cycles KMAX (>=3) or --corpus DIR\n";
        return kExitUsage;
      }
      const welwl::RunRecord record = welwl::run_separation_experiment(cfg, corpus);
      emit(record, cfg.out_path, cfg.format);
      if (record.summary.at("success_rate") < 1.0) {
        list_failures(record, "separated", 0);
        return kExitThreshold;
      }
      return kExitOk;
    }

    if (comp_cmd->parsed()) {
      if (!comp_cmd->count("--rounds")) cfg.iterations = 3;
      const welwl::RunRecord record = welwl::run_geometric_completeness(cfg);
      emit(record, cfg.out_path, cfg.format);
      if (record.summary.at("pass") != 1.0) {
        list_failures(record, "separated", 1);
        list_failures(record, "separated", 0);
        return kExitThreshold;
      }
      return kExitOk;
    }

    if (equi_cmd->parsed()) {
      if (!equi_cmd->count("--n")) cfg.n = 6;
      if (!equi_cmd->count("--trials")) cfg.trials = 50;
      const welwl::RunRecord record = welwl::run_equivariance_suite(cfg);
      emit(record, cfg.out_path, cfg.format);
      return record.summary.at("pass") == 1.0 ? kExitOk : kExitThreshold;
    }

    if (uni_cmd->parsed()) {
      if (!uni_cmd->count("--n")) cfg.n = 4;
      if (!uni_cmd->count("--rounds")) cfg.iterations = 5;
      const welwl::RunRecord record = welwl::run_uniform_separation(cfg);
      emit(record, cfg.out_path, cfg.format);
      if (record.summary.at("pass") != 1.0) {
        list_failures(record, "separated", 0);
        return kExitThreshold;
      }
      return kExitOk;
    }

    if (nbody_cmd->parsed()) {
      const welwl::Trajectory traj = welwl::simulate_nbody(cfg.seed, nbody_n, nbody_steps, nbody_dt, nbody_box);
      welwl::save_json_file(nbody_out, welwl::to_json(traj));
      std::cout << "wrote " << nbody_out << " steps=" << traj.steps << " energy_drift=" << traj.energy_drift
                << " momentum_error=" << welwl::momentum_error(traj) << "\n";
      return kExitOk;
    }

    if (bench_cmd->parsed()) {
      cfg.bench_sizes = parse_sizes(sizes_csv);
      const welwl::RunRecord record = welwl::run_scaling_benchmark(cfg);
      emit(record, cfg.out_path, cfg.format);
      if (!expect_band.empty()) {
        const auto colon = expect_band.find(':');
        if (colon == std::string::npos) throw welwl::ConfigError("--expect-ratio wants MIN:MAX");
        const double lo = std::stod(expect_band.substr(0, colon));
        const double hi = std::stod(expect_band.substr(colon + 1));
        for (const auto& [key, value] : record.summary) {
          if (key.rfind("ratio_", 0) != 0) continue;
          if (value < lo || value > hi) {
            std::cout << key << "=" << value << " outside [" << lo << ", " << hi << "]\n";
            return kExitThreshold;
          }
        }
      }
      return kExitOk;
    }
  } catch (const welwl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
