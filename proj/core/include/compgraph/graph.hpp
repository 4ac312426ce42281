#pragma once

#include <filesystem>
#include <vector>

#include "compgraph/components.hpp"
#include "compgraph/influence.hpp"

namespace compgraph {

struct Edge {
  int src = 0;
  int dst = 0;
  float weight = 0.0f;

  bool operator==(const Edge&) const = default;
};

// Plain weighted digraph over nodes 0 .. num_nodes-1; the metric kernels
// work on this.
struct Digraph {
  int num_nodes = 0;
  std::vector<Edge> edges;
};

struct ComponentGraph {
  std::vector<ComponentId> nodes;  // fixed universe, stage order
  Digraph topology;                // edges sorted by (src, dst)
  double tau = 1.0;
  long step = 0;

  const std::vector<Edge>& edges() const { return topology.edges; }
};

// Edge (i, j, 1 - S) for every defined pair with S < tau, compared in
// single precision. Throws UsageError unless tau lies in (0, 1].
ComponentGraph build_graph(const InfluenceMatrix& matrix, double tau);

struct ActiveNodes {
  int count = 0;
  std::vector<bool> active;  // indexed like the node universe
};

// Nodes with in-degree + out-degree >= 1.
ActiveNodes active_nodes(const Digraph& graph);
inline ActiveNodes active_nodes(const ComponentGraph& graph) {
  return active_nodes(graph.topology);
}

// Kahn's algorithm; true when every node can be ordered.
bool is_acyclic(const Digraph& graph);

// `src,dst,weight` rows plus a .json sidecar {step,tau,num_nodes_active,num_edges}.
void write_edges_csv(const ComponentGraph& graph, const std::filesystem::path& csv_path);
// Reads edges back into the given node universe.
ComponentGraph read_edges_csv(const std::filesystem::path& csv_path,
                              const std::vector<ComponentId>& nodes);

}  // namespace compgraph
