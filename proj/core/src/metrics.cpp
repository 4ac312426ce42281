#include "compgraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stack>

#include "compgraph/error.hpp"

namespace compgraph {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Arc {
  int to;
  double length;
};

std::vector<std::vector<Arc>> adjacency(const Digraph& g, bool reverse) {
  std::vector<std::vector<Arc>> adj(static_cast<size_t>(g.num_nodes));
  for (const Edge& e : g.edges) {
    if (!(e.weight > 0.0f)) throw UsageError("edge weights must be positive");
    const double len = 1.0 / static_cast<double>(e.weight);
    if (reverse) {
      adj[static_cast<size_t>(e.dst)].push_back({e.src, len});
    } else {
      adj[static_cast<size_t>(e.src)].push_back({e.dst, len});
    }
  }
  return adj;
}

bool tied(double a, double b) {
  return std::abs(a - b) <= kPathTieTolerance * std::max(std::abs(a), std::abs(b));
}

using QueueItem = std::pair<double, int>;
using MinQueue = std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<>>;

std::vector<double> dijkstra(const std::vector<std::vector<Arc>>& adj, int source) {
  std::vector<double> dist(adj.size(), kInf);
  std::vector<bool> done(adj.size(), false);
  dist[static_cast<size_t>(source)] = 0.0;
  MinQueue queue;
  queue.push({0.0, source});
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (done[static_cast<size_t>(v)]) continue;
    done[static_cast<size_t>(v)] = true;
    for (const Arc& a : adj[static_cast<size_t>(v)]) {
      const double nd = d + a.length;
      if (nd < dist[static_cast<size_t>(a.to)]) {
        dist[static_cast<size_t>(a.to)] = nd;
        queue.push({nd, a.to});
      }
    }
  }
  return dist;
}

}  // namespace

double density(const Digraph& graph) {
  const double n = active_nodes(graph).count;
  if (n < 2) return 0.0;
  return static_cast<double>(graph.edges.size()) / (n * (n - 1.0));
}

Strengths strengths(const Digraph& graph) {
  Strengths s;
  s.in.assign(static_cast<size_t>(graph.num_nodes), 0.0);
  s.out.assign(static_cast<size_t>(graph.num_nodes), 0.0);
  for (const Edge& e : graph.edges) {
    s.out[static_cast<size_t>(e.src)] += e.weight;
    s.in[static_cast<size_t>(e.dst)] += e.weight;
  }
  return s;
}

std::vector<double> betweenness(const Digraph& graph) {
  const auto n = static_cast<size_t>(graph.num_nodes);
  std::vector<double> cb(n, 0.0);
  const auto adj = adjacency(graph, false);
  const auto active = active_nodes(graph);

  std::vector<double> dist(n);
  std::vector<double> sigma(n);
  std::vector<double> delta(n);
  std::vector<bool> settled(n);
  std::vector<std::vector<int>> preds(n);
  for (size_t s = 0; s < n; ++s) {
    if (adj[s].empty()) continue;
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(sigma.begin(), sigma.end(), 0.0);
    std::fill(delta.begin(), delta.end(), 0.0);
    std::fill(settled.begin(), settled.end(), false);
    for (auto& p : preds) p.clear();
    std::vector<int> order;
    dist[s] = 0.0;
    sigma[s] = 1.0;
    MinQueue queue;
    queue.push({0.0, static_cast<int>(s)});
    while (!queue.empty()) {
      const int v = queue.top().second;
      queue.pop();
      const auto vs = static_cast<size_t>(v);
      if (settled[vs]) continue;
      settled[vs] = true;
      order.push_back(v);
      for (const Arc& a : adj[vs]) {
        const auto u = static_cast<size_t>(a.to);
        if (settled[u]) continue;
        const double nd = dist[vs] + a.length;
        if (dist[u] == kInf || (nd < dist[u] && !tied(nd, dist[u]))) {
          dist[u] = nd;
          sigma[u] = sigma[vs];
          preds[u].assign(1, v);
          queue.push({nd, a.to});
        } else if (tied(nd, dist[u])) {
          sigma[u] += sigma[vs];
          preds[u].push_back(v);
        }
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const auto w = static_cast<size_t>(*it);
      for (int v : preds[w]) {
        const auto vs = static_cast<size_t>(v);
        delta[vs] += sigma[vs] / sigma[w] * (1.0 + delta[w]);
      }
      if (w != s) cb[w] += delta[w];
    }
  }
  const double na = active.count;
  if (na < 3) return std::vector<double>(n, 0.0);
  const double norm = (na - 1.0) * (na - 2.0);
  for (double& v : cb) v /= norm;
  return cb;
}

std::vector<double> closeness(const Digraph& graph, Direction direction) {
  const auto n = static_cast<size_t>(graph.num_nodes);
  std::vector<double> out(n, 0.0);
  const double na = active_nodes(graph).count;
  if (na < 2) return out;
  const auto adj = adjacency(graph, direction == Direction::kIn);
  for (size_t v = 0; v < n; ++v) {
    if (adj[v].empty()) continue;
    const auto dist = dijkstra(adj, static_cast<int>(v));
    double reached = 0.0;
    double total = 0.0;
    for (size_t u = 0; u < n; ++u) {
      if (u == v || dist[u] == kInf) continue;
      reached += 1.0;
      total += dist[u];
    }
    if (reached > 0.0 && total > 0.0) out[v] = (reached / total) * (reached / (na - 1.0));
  }
  return out;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw UsageError("percentile of an empty set");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double rank = p * static_cast<double>(sorted.size() - 1) / 100.0;
  const auto lo = static_cast<size_t>(std::floor(rank));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<bool> percentile_flags(std::span<const double> values, double p) {
  const double threshold = percentile(values, p);
  std::vector<bool> flags(values.size());
  for (size_t i = 0; i < values.size(); ++i) flags[i] = values[i] > threshold;
  return flags;
}

double WeightHistogram::bin_lo(size_t i) const {
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(counts.size());
}

double WeightHistogram::bin_hi(size_t i) const { return bin_lo(i + 1); }

WeightHistogram weight_histogram(const Digraph& graph, int bins) {
  if (bins < 1) throw UsageError("histogram needs at least one bin");
  WeightHistogram h;
  h.counts.assign(static_cast<size_t>(bins), 0);
  const auto last = static_cast<size_t>(bins - 1);
  for (const Edge& e : graph.edges) {
    const double w = e.weight;
    if (w < h.lo || w > h.hi) throw UsageError("edge weight outside [0, 2]");
    // Start from the arithmetic guess, then settle against the exact edges.
    auto i = static_cast<size_t>(std::clamp((w - h.lo) / (h.hi - h.lo) * bins, 0.0,
                                            static_cast<double>(last)));
    while (i < last && h.bin_lo(i + 1) <= w) ++i;
    while (i > 0 && h.bin_lo(i) > w) --i;
    h.counts[i]++;
  }
  return h;
}

GraphMetrics compute_metrics(const ComponentGraph& graph, double correct_token_logit) {
  const Digraph& g = graph.topology;
  const auto st = strengths(g);
  const auto bc = betweenness(g);
  const auto cl_out = closeness(g, Direction::kOut);
  const auto cl_in = closeness(g, Direction::kIn);
  const auto f_in = percentile_flags(st.in);
  const auto f_out = percentile_flags(st.out);
  const auto f_bc = percentile_flags(bc);
  const auto f_cl = percentile_flags(cl_out);

  GraphMetrics m;
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    NodeMetricRecord r;
    r.step = graph.step;
    r.tau = graph.tau;
    r.component = graph.nodes[i].name();
    r.in_strength = st.in[i];
    r.out_strength = st.out[i];
    r.betweenness = bc[i];
    r.closeness_out = cl_out[i];
    r.closeness_in = cl_in[i];
    r.top_in = f_in[i];
    r.top_out = f_out[i];
    r.top_betweenness = f_bc[i];
    r.top_closeness_out = f_cl[i];
    m.nodes.push_back(std::move(r));
  }
  m.global.step = graph.step;
  m.global.tau = graph.tau;
  m.global.num_active_nodes = active_nodes(g).count;
  m.global.num_edges = static_cast<long>(g.edges.size());
  m.global.density = density(g);
  m.global.correct_token_logit = correct_token_logit;
  m.global.weight_histogram = weight_histogram(g);
  return m;
}

}  // namespace compgraph
