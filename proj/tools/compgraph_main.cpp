// compgraph: train desk-scale checkpoints, extract ablation influence graphs
// and sweep network metrics over a checkpoint series.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 partial failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "compgraph/checkpoint.hpp"
#include "compgraph/csv.hpp"
#include "compgraph/error.hpp"
#include "compgraph/graph.hpp"
#include "compgraph/influence.hpp"
#include "compgraph/metrics.hpp"
#include "compgraph/report.hpp"
#include "compgraph/sweep.hpp"
#include "compgraph/trainer.hpp"

namespace fs = std::filesystem;
using namespace compgraph;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitPartial = 3;

struct TrainArgs {
  fs::path out;
  long steps = 5000;
  std::uint64_t seed = 0;
  int batch = 32;
  int seq_len = 64;
  double lr = 1e-3;
  int layers = 2;
  int heads = 4;
  int d_model = 64;
  int d_head = 16;
  int d_mlp = 256;
  int vocab = 128;
  std::string block_style = "preln_sequential";
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  cfg.model.n_layers = a.layers;
  cfg.model.n_heads = a.heads;
  cfg.model.d_model = a.d_model;
  cfg.model.d_head = a.d_head;
  cfg.model.d_mlp = a.d_mlp;
  cfg.model.vocab_size = a.vocab;
  cfg.model.n_ctx = a.seq_len;
  cfg.model.block_style = parse_block_style(a.block_style);
  cfg.steps = a.steps;
  cfg.batch_size = a.batch;
  cfg.seq_len = a.seq_len;
  cfg.adam.learning_rate = a.lr;
  cfg.seed = a.seed;
  cfg.checkpoint_schedule = default_checkpoint_schedule(a.steps);
  cfg.out_dir = a.out;
  const long report_every = std::max(1L, a.steps / 20);
  CheckpointManifest m = train(cfg, [&](const TrainProgress& p) {
    if (!a.quiet && p.step % report_every == 0) {
      std::printf("step %6ld  loss %.4f\n", p.step, p.loss);
      std::fflush(stdout);
    }
  });
  const auto last = load_checkpoint(m.checkpoints.back().path);
  const auto acc = evaluate_induction(last.weights, last.config, a.seed + 7, 8, a.batch, a.seq_len);
  std::printf("wrote %zu checkpoints to %s\n", m.checkpoints.size(), a.out.string().c_str());
  std::printf("repeated-half accuracy %.4f, first-half accuracy %.4f\n", acc.repeated_half,
              acc.first_half);
  return kExitOk;
}

struct InfluenceArgs {
  fs::path checkpoint;
  fs::path manifest;
  std::optional<long> step;
  fs::path tokens;
  std::string scope = "all";
  bool strict = false;
  int threads = 1;
  fs::path out;
};

int run_influence(const InfluenceArgs& a) {
  fs::path path = a.checkpoint;
  if (path.empty()) {
    if (a.manifest.empty() || !a.step) {
      throw UsageError("give --checkpoint, or --manifest with --step");
    }
    const auto m = read_manifest(a.manifest);
    for (const auto& e : m.checkpoints) {
      if (e.step == *a.step) path = e.path;
    }
    if (path.empty()) throw DataError("step " + std::to_string(*a.step) + " not in manifest");
  }
  LoadedCheckpoint ckpt = load_checkpoint(path);
  for (const auto& w : ckpt.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  AnalysisInput input = read_tokens_file(a.tokens);
  input.scope = parse_scope(a.scope);
  InfluenceOptions opts;
  opts.strict_layer_order = a.strict;
  opts.threads = a.threads;
  InfluenceMatrix m = influence_matrix(ckpt.weights, ckpt.config, input, opts);
  m.step = ckpt.step;
  fs::create_directories(a.out);
  const fs::path csv = a.out / ("influence_" + std::to_string(ckpt.step) + ".csv");
  write_influence_csv(m, csv);
  std::printf("%s: %zu pairs, correct token logit %.6f\n", csv.string().c_str(), m.num_defined(),
              m.correct_token_logit);
  return kExitOk;
}

struct GraphArgs {
  fs::path influence;
  std::optional<double> tau;
  std::string taus;
  fs::path out;
};

int run_graph(const GraphArgs& a) {
  InfluenceMatrix m = read_influence_csv(a.influence);
  std::vector<double> taus = a.tau ? std::vector<double>{*a.tau}
                                   : (a.taus.empty() ? kDefaultTaus : parse_taus(a.taus));
  fs::create_directories(a.out);
  for (double tau : taus) {
    ComponentGraph g = build_graph(m, tau);
    const fs::path csv =
        a.out / ("edges_" + std::to_string(m.step) + "_" + format_tau(tau) + ".csv");
    write_edges_csv(g, csv);
    std::printf("tau=%s: %d active nodes, %zu edges, density %.4f -> %s\n",
                format_tau(tau).c_str(), active_nodes(g).count, g.edges().size(),
                density(g.topology), csv.string().c_str());
  }
  return kExitOk;
}

struct SweepArgs {
  fs::path manifest;
  fs::path tokens;
  std::string taus;
  std::string scope = "all";
  bool strict = false;
  int threads = 1;
  bool reproducible = false;
  bool no_figures = false;
  fs::path out;
};

int run_sweep(const SweepArgs& a) {
  SweepConfig cfg;
  cfg.manifest = a.manifest;
  cfg.tokens = a.tokens;
  if (!a.taus.empty()) cfg.taus = parse_taus(a.taus);
  cfg.scope = parse_scope(a.scope);
  cfg.strict_layer_order = a.strict;
  cfg.threads = a.threads;
  cfg.reproducible = a.reproducible;
  cfg.render_figures = !a.no_figures;
  cfg.out_dir = a.out;
  SweepResult r = sweep(cfg);
  std::printf("processed %d checkpoints in %.2f s -> %s\n", r.checkpoints_done, r.total_seconds,
              a.out.string().c_str());
  for (const auto& f : r.failures) {
    std::fprintf(stderr, "checkpoint step %ld failed: %s\n", f.step, f.error.c_str());
  }
  return r.failures.empty() ? kExitOk : kExitPartial;
}

int run_report(const fs::path& dir, double tau) {
  for (const auto& p : render_report(dir, tau)) std::printf("%s\n", p.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Component-graph analysis of transformer training checkpoints"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a desk-scale model on repeated sequences");
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--steps", train_args.steps, "Optimizer steps");
  train_cmd->add_option("--seed", train_args.seed, "Random seed");
  train_cmd->add_option("--batch", train_args.batch, "Sequences per batch");
  train_cmd->add_option("--seq-len", train_args.seq_len, "Sequence length (even)");
  train_cmd->add_option("--lr", train_args.lr, "Adam learning rate");
  train_cmd->add_option("--layers", train_args.layers);
  train_cmd->add_option("--heads", train_args.heads);
  train_cmd->add_option("--d-model", train_args.d_model);
  train_cmd->add_option("--d-head", train_args.d_head);
  train_cmd->add_option("--d-mlp", train_args.d_mlp);
  train_cmd->add_option("--vocab", train_args.vocab);
  train_cmd->add_option("--block-style", train_args.block_style)
      ->check(CLI::IsMember({"preln_sequential", "postln_sequential", "parallel_residual"}));
  train_cmd->add_flag("--quiet", train_args.quiet);

  InfluenceArgs inf_args;
  auto* inf_cmd = app.add_subcommand("influence", "Compute the ablation influence matrix");
  inf_cmd->add_option("--checkpoint", inf_args.checkpoint, "Checkpoint container");
  inf_cmd->add_option("--manifest", inf_args.manifest, "Manifest (with --step)");
  inf_cmd->add_option("--step", inf_args.step, "Checkpoint step in the manifest");
  inf_cmd->add_option("--tokens", inf_args.tokens, "tokens.json")->required();
  inf_cmd->add_option("--scope", inf_args.scope)->check(CLI::IsMember({"all", "last"}));
  inf_cmd->add_flag("--strict-layer-order", inf_args.strict);
  inf_cmd->add_option("--threads", inf_args.threads)->check(CLI::PositiveNumber);
  inf_cmd->add_option("--out", inf_args.out, "Output directory")->required();

  GraphArgs graph_args;
  auto* graph_cmd = app.add_subcommand("graph", "Threshold an influence CSV into edge lists");
  graph_cmd->add_option("--influence", graph_args.influence, "influence_{step}.csv")->required();
  graph_cmd->add_option("--tau", graph_args.tau, "Single threshold");
  graph_cmd->add_option("--taus", graph_args.taus, "Comma-separated thresholds");
  graph_cmd->add_option("--out", graph_args.out, "Output directory")->required();

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Full pipeline over a checkpoint manifest");
  sweep_cmd->add_option("--manifest", sweep_args.manifest)->required();
  sweep_cmd->add_option("--tokens", sweep_args.tokens)->required();
  sweep_cmd->add_option("--taus", sweep_args.taus, "Comma-separated thresholds");
  sweep_cmd->add_option("--scope", sweep_args.scope)->check(CLI::IsMember({"all", "last"}));
  sweep_cmd->add_flag("--strict-layer-order", sweep_args.strict);
  sweep_cmd->add_option("--threads", sweep_args.threads)->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("--reproducible", sweep_args.reproducible);
  sweep_cmd->add_flag("--no-figures", sweep_args.no_figures);
  sweep_cmd->add_option("--out", sweep_args.out, "Output directory")->required();

  fs::path report_dir;
  double report_tau = 0.7;
  auto* report_cmd = app.add_subcommand("report", "Render SVG figures from sweep CSVs");
  report_cmd->add_option("--out", report_dir, "Sweep output directory")->required();
  report_cmd->add_option("--tau", report_tau, "Threshold for heatmaps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*inf_cmd) return run_influence(inf_args);
    if (*graph_cmd) return run_graph(graph_args);
    if (*sweep_cmd) return run_sweep(sweep_args);
    if (*report_cmd) return run_report(report_dir, report_tau);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
