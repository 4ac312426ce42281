#include "compgraph/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "compgraph/checkpoint.hpp"
#include "compgraph/csv.hpp"
#include "compgraph/error.hpp"
#include "compgraph/graph.hpp"
#include "compgraph/metrics.hpp"
#include "compgraph/report.hpp"

namespace compgraph {
namespace fs = std::filesystem;

void SweepConfig::validate() const {
  if (taus.empty()) throw UsageError("at least one tau is required");
  for (size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0 && taus[i] <= 1.0)) {
      throw UsageError("tau " + format_tau(taus[i]) + " outside (0, 1]");
    }
    if (i > 0 && !(taus[i] > taus[i - 1])) throw UsageError("taus must be strictly increasing");
  }
  if (threads < 1) throw UsageError("threads must be >= 1");
  if (out_dir.empty()) throw UsageError("an output directory is required");
}

std::vector<double> parse_taus(std::string_view text) {
  std::vector<double> out;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t comma = text.find(',', start);
    auto piece = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
    while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
    while (!piece.empty() && piece.back() == ' ') piece.remove_suffix(1);
    try {
      out.push_back(parse_double(piece));
    } catch (const DataError&) {
      throw UsageError("bad tau list '" + std::string(text) + "'");
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

namespace {

struct CheckpointOutput {
  long step = 0;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  std::vector<GraphMetrics> metrics;  // one per tau
};

CheckpointOutput process(const CheckpointEntry& entry, const AnalysisInput& input,
                         const SweepConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  CheckpointOutput out;
  out.step = entry.step;
  try {
    LoadedCheckpoint ckpt = load_checkpoint(entry.path);
    InfluenceOptions opts;
    opts.strict_layer_order = config.strict_layer_order;
    InfluenceMatrix m = influence_matrix(ckpt.weights, ckpt.config, input, opts);
    m.step = entry.step;
    const std::string step = std::to_string(entry.step);
    write_influence_csv(m, config.out_dir / "influence" / ("influence_" + step + ".csv"));
    for (double tau : config.taus) {
      ComponentGraph g = build_graph(m, tau);
      write_edges_csv(g, config.out_dir / "edges" /
                             ("edges_" + step + "_" + format_tau(tau) + ".csv"));
      out.metrics.push_back(compute_metrics(g, m.correct_token_logit));
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::string bool01(bool b) { return b ? "1" : "0"; }

}  // namespace

SweepResult sweep(const SweepConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const CheckpointManifest manifest = read_manifest(config.manifest);
  AnalysisInput input = read_tokens_file(config.tokens);
  input.scope = config.scope;
  input.validate(manifest.model_config);

  fs::create_directories(config.out_dir / "influence");
  fs::create_directories(config.out_dir / "edges");

  const size_t n = manifest.checkpoints.size();
  std::vector<CheckpointOutput> outputs(n);
  const int width = config.reproducible ? 1 : std::min<int>(config.threads, static_cast<int>(n));
  if (width <= 1) {
    for (size_t i = 0; i < n; ++i) outputs[i] = process(manifest.checkpoints[i], input, config);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::jthread> pool;
    for (int t = 0; t < width; ++t) {
      pool.emplace_back([&] {
        for (size_t i = next++; i < n; i = next++) {
          outputs[i] = process(manifest.checkpoints[i], input, config);
        }
      });
    }
  }

  // Single-writer merge ordered by (step, tau).
  std::ostringstream global, nodes, hist;
  global << "step,tau,num_nodes,num_edges,density,correct_token_logit\n";
  nodes << "step,tau,component,in_strength,out_strength,betweenness,closeness_out,closeness_in,"
           "top_in,top_out,top_betweenness,top_closeness_out\n";
  hist << "step,tau,bin_lo,bin_hi,count\n";
  SweepResult result;
  nlohmann::ordered_json per_ckpt = nlohmann::ordered_json::array();
  for (const auto& out : outputs) {
    per_ckpt.push_back({{"step", out.step}, {"seconds", out.seconds}, {"ok", out.ok}});
    if (!out.ok) {
      result.failures.push_back({out.step, out.error});
      continue;
    }
    ++result.checkpoints_done;
    for (const GraphMetrics& gm : out.metrics) {
      const auto& g = gm.global;
      const std::string prefix = std::to_string(g.step) + "," + format_tau(g.tau) + ",";
      global << prefix << g.num_active_nodes << ',' << g.num_edges << ','
             << format_number(g.density) << ',' << format_number(g.correct_token_logit) << '\n';
      for (const auto& r : gm.nodes) {
        nodes << prefix << r.component << ',' << format_number(r.in_strength) << ','
              << format_number(r.out_strength) << ',' << format_number(r.betweenness) << ','
              << format_number(r.closeness_out) << ',' << format_number(r.closeness_in) << ','
              << bool01(r.top_in) << ',' << bool01(r.top_out) << ','
              << bool01(r.top_betweenness) << ',' << bool01(r.top_closeness_out) << '\n';
      }
      const auto& h = g.weight_histogram;
      for (size_t b = 0; b < h.counts.size(); ++b) {
        hist << prefix << format_number(h.bin_lo(b)) << ',' << format_number(h.bin_hi(b)) << ','
             << h.counts[b] << '\n';
      }
    }
  }
  write_text_file(config.out_dir / "global_metrics.csv", global.str());
  write_text_file(config.out_dir / "node_metrics.csv", nodes.str());
  write_text_file(config.out_dir / "weight_hist.csv", hist.str());

  const bool have_figure_tau =
      std::any_of(config.taus.begin(), config.taus.end(),
                  [&](double t) { return std::abs(t - config.figure_tau) <= 1e-9; });
  if (config.render_figures && result.checkpoints_done > 0) {
    render_report(config.out_dir, have_figure_tau ? config.figure_tau : config.taus.back());
  }

  result.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  nlohmann::ordered_json summary;
  summary["config"] = {
      {"manifest", config.manifest.generic_string()},
      {"tokens", config.tokens.generic_string()},
      {"taus", config.taus},
      {"scope", std::string(to_string(config.scope))},
      {"strict_layer_order", config.strict_layer_order},
      {"threads", width},
      {"reproducible", config.reproducible},
      {"model_config", nlohmann::ordered_json::parse(model_config_to_json(manifest.model_config))},
  };
  summary["per_checkpoint_seconds"] = per_ckpt;
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const auto& f : result.failures) failures.push_back({{"step", f.step}, {"error", f.error}});
  summary["totals"] = {{"checkpoints", n},
                       {"succeeded", result.checkpoints_done},
                       {"failed", result.failures.size()},
                       {"seconds", result.total_seconds},
                       {"failures", failures}};
  write_text_file(config.out_dir / "summary.json", summary.dump(2) + "\n");
  return result;
}

}  // namespace compgraph
