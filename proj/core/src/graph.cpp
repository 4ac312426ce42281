#include "compgraph/graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "compgraph/csv.hpp"
#include "compgraph/error.hpp"

namespace compgraph {
namespace fs = std::filesystem;

ComponentGraph build_graph(const InfluenceMatrix& matrix, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) {
    throw UsageError("tau must lie in (0, 1], got " + format_tau(tau));
  }
  ComponentGraph g;
  g.nodes = matrix.components();
  g.topology.num_nodes = static_cast<int>(g.nodes.size());
  g.tau = tau;
  g.step = matrix.step;
  const float threshold = static_cast<float>(tau);
  for (size_t i = 0; i < matrix.size(); ++i) {
    for (size_t j = 0; j < matrix.size(); ++j) {
      const auto s = matrix.at(i, j);
      if (s && *s < threshold) {
        g.topology.edges.push_back({static_cast<int>(i), static_cast<int>(j), 1.0f - *s});
      }
    }
  }
  return g;
}

ActiveNodes active_nodes(const Digraph& graph) {
  ActiveNodes out;
  out.active.assign(static_cast<size_t>(graph.num_nodes), false);
  for (const Edge& e : graph.edges) {
    out.active[static_cast<size_t>(e.src)] = true;
    out.active[static_cast<size_t>(e.dst)] = true;
  }
  out.count = static_cast<int>(std::count(out.active.begin(), out.active.end(), true));
  return out;
}

bool is_acyclic(const Digraph& graph) {
  const auto n = static_cast<size_t>(graph.num_nodes);
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> out(n);
  for (const Edge& e : graph.edges) {
    out[static_cast<size_t>(e.src)].push_back(e.dst);
    indegree[static_cast<size_t>(e.dst)]++;
  }
  std::vector<int> ready;
  for (size_t v = 0; v < n; ++v) {
    if (indegree[v] == 0) ready.push_back(static_cast<int>(v));
  }
  size_t ordered = 0;
  while (!ready.empty()) {
    const int v = ready.back();
    ready.pop_back();
    ++ordered;
    for (int u : out[static_cast<size_t>(v)]) {
      if (--indegree[static_cast<size_t>(u)] == 0) ready.push_back(u);
    }
  }
  return ordered == n;
}

void write_edges_csv(const ComponentGraph& graph, const fs::path& csv_path) {
  std::ostringstream out;
  out << "src,dst,weight\n";
  for (const Edge& e : graph.edges()) {
    out << graph.nodes[static_cast<size_t>(e.src)].name() << ','
        << graph.nodes[static_cast<size_t>(e.dst)].name() << ',' << format_number(e.weight)
        << '\n';
  }
  write_text_file(csv_path, out.str());

  nlohmann::ordered_json side;
  side["step"] = graph.step;
  side["tau"] = graph.tau;
  side["num_nodes_active"] = active_nodes(graph).count;
  side["num_edges"] = graph.edges().size();
  fs::path side_path = csv_path;
  side_path.replace_extension(".json");
  write_text_file(side_path, side.dump() + "\n");
}

ComponentGraph read_edges_csv(const fs::path& csv_path, const std::vector<ComponentId>& nodes) {
  const CsvTable table = read_csv(csv_path);
  const size_t c_src = table.column("src");
  const size_t c_dst = table.column("dst");
  const size_t c_w = table.column("weight");
  ComponentGraph g;
  g.nodes = nodes;
  g.topology.num_nodes = static_cast<int>(nodes.size());
  auto index_of = [&](const std::string& name) {
    const ComponentId id = ComponentId::parse(name);
    auto it = std::find(nodes.begin(), nodes.end(), id);
    if (it == nodes.end()) throw DataError("edge endpoint " + name + " not in node universe");
    return static_cast<int>(it - nodes.begin());
  };
  for (const auto& row : table.rows) {
    g.topology.edges.push_back({index_of(row[c_src]), index_of(row[c_dst]), parse_float(row[c_w])});
  }
  fs::path side_path = csv_path;
  side_path.replace_extension(".json");
  if (fs::exists(side_path)) {
    std::ifstream in(side_path);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("bad sidecar " + side_path.string());
    g.step = j.value("step", 0L);
    g.tau = j.value("tau", 1.0);
  }
  return g;
}

}  // namespace compgraph
