#pragma once

#include <span>
#include <string>
#include <vector>

#include "compgraph/graph.hpp"

namespace compgraph {

// Relative tolerance under which two shortest-path lengths count as a tie.
inline constexpr double kPathTieTolerance = 1e-9;

// |E| / (n (n - 1)) over the n active nodes; 0 when n < 2.
double density(const Digraph& graph);

struct Strengths {
  std::vector<double> in;
  std::vector<double> out;
};

// Weighted in/out degree of every node.
Strengths strengths(const Digraph& graph);

// Brandes betweenness with edge length 1/w, normalized by (n-1)(n-2) over
// the n active nodes.
std::vector<double> betweenness(const Digraph& graph);

enum class Direction { kOut, kIn };

// Reachable-set closeness with the disconnection correction:
//   C(v) = ((|R|-1) / sum_{u in R} d(v,u)) * ((|R|-1) / (n-1))
// where R is the set reached from v (kOut) or reaching v (kIn), v included,
// and n counts active nodes.
std::vector<double> closeness(const Digraph& graph, Direction direction);

// Linear-interpolation percentile at rank p (n-1) / 100 of the sorted values.
double percentile(std::span<const double> values, double p);

// Marks values strictly greater than the p-th percentile.
std::vector<bool> percentile_flags(std::span<const double> values, double p = 95.0);

struct WeightHistogram {
  double lo = 0.0;
  double hi = 2.0;
  std::vector<long> counts;

  double bin_lo(size_t i) const;
  double bin_hi(size_t i) const;
};

// Equal-width bins over [0, 2], right-exclusive except the last.
WeightHistogram weight_histogram(const Digraph& graph, int bins = 40);

struct NodeMetricRecord {
  long step = 0;
  double tau = 0.0;
  std::string component;
  double in_strength = 0.0;
  double out_strength = 0.0;
  double betweenness = 0.0;
  double closeness_out = 0.0;
  double closeness_in = 0.0;
  bool top_in = false;
  bool top_out = false;
  bool top_betweenness = false;
  bool top_closeness_out = false;
};

struct GlobalMetricRecord {
  long step = 0;
  double tau = 0.0;
  int num_active_nodes = 0;
  long num_edges = 0;
  double density = 0.0;
  double correct_token_logit = 0.0;
  WeightHistogram weight_histogram;
};

struct GraphMetrics {
  std::vector<NodeMetricRecord> nodes;  // one per component in the universe
  GlobalMetricRecord global;
};

GraphMetrics compute_metrics(const ComponentGraph& graph, double correct_token_logit);

}  // namespace compgraph
