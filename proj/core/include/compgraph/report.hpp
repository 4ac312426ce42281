#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace compgraph {

// Component x checkpoint grid of top-percentile flags for one metric and tau.
struct HeatmapMatrix {
  std::string metric;
  double tau = 0.0;
  std::vector<std::string> rows;  // component names, stage order
  std::vector<long> steps;        // columns, ascending
  std::vector<std::vector<bool>> cells;
};

// Metrics accepted by render_timeseries.
inline constexpr std::string_view kTimeseriesMetrics[] = {"num_nodes", "num_edges", "density"};
// Flag columns accepted by render_heatmap.
inline constexpr std::string_view kFlagColumns[] = {"top_in", "top_out", "top_betweenness",
                                                    "top_closeness_out"};

HeatmapMatrix build_heatmap(const std::filesystem::path& node_csv, std::string_view flag_column,
                            double tau);

// One polyline per tau on a log10(step + 1) axis with the correct-token logit
// on a secondary axis.
std::string timeseries_svg(const std::filesystem::path& global_csv, std::string_view metric);
void render_timeseries(const std::filesystem::path& global_csv, std::string_view metric,
                       const std::filesystem::path& out_svg);

std::string heatmap_svg(const HeatmapMatrix& heatmap);
void render_heatmap(const std::filesystem::path& node_csv, std::string_view flag_column,
                    double tau, const std::filesystem::path& out_svg);

// Edge-weight histogram per step at one tau, shaded by count.
void render_weight_distribution(const std::filesystem::path& hist_csv, double tau,
                                const std::filesystem::path& out_svg);

// Renders every figure from the aggregate CSVs in `dir` into dir/figures.
std::vector<std::filesystem::path> render_report(const std::filesystem::path& dir, double tau);

}  // namespace compgraph
