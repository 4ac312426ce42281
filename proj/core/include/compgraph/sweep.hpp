#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "compgraph/influence.hpp"

namespace compgraph {

inline const std::vector<double> kDefaultTaus = {0.1, 0.3, 0.5, 0.7, 0.9, 1.0};

struct SweepConfig {
  std::filesystem::path manifest;
  std::filesystem::path tokens;
  std::vector<double> taus = kDefaultTaus;
  ComparisonScope scope = ComparisonScope::kAllPositions;
  bool strict_layer_order = false;
  std::filesystem::path out_dir;
  int threads = 1;
  // Forces sequential processing of checkpoints.
  bool reproducible = false;
  bool render_figures = true;
  double figure_tau = 0.7;

  // Throws UsageError: taus must be strictly increasing within (0, 1].
  void validate() const;
};

struct CheckpointFailure {
  long step = 0;
  std::string error;
};

struct SweepResult {
  int checkpoints_done = 0;
  std::vector<CheckpointFailure> failures;
  double total_seconds = 0.0;
};

// Writes under out_dir:
//   influence/influence_{step}.csv (+ .json)
//   edges/edges_{step}_{tau}.csv (+ .json)
//   global_metrics.csv, node_metrics.csv, weight_hist.csv, summary.json
//   figures/*.svg (when render_figures is set)
// A checkpoint that fails is reported in the result and skipped.
SweepResult sweep(const SweepConfig& config);

// Parses "0.1,0.3,..." into thresholds.
std::vector<double> parse_taus(std::string_view text);

}  // namespace compgraph
