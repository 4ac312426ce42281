#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "compgraph/metrics.hpp"
#include "graph_oracles.hpp"

using namespace compgraph;

TEST(Density, Examples) {
  Digraph g{10, {{0, 1, 1.0f}, {1, 2, 1.0f}, {2, 3, 1.0f}, {3, 4, 1.0f}}};
  EXPECT_DOUBLE_EQ(density(g), 0.2);
  EXPECT_EQ(density(Digraph{10, {}}), 0.0);
  EXPECT_DOUBLE_EQ(density(Digraph{3, {{0, 1, 0.3f}, {0, 2, 0.3f}, {1, 2, 0.3f}}}), 0.5);
}

TEST(Strengths, SingleEdge) {
  const auto s = strengths(Digraph{4, {{1, 3, 0.6f}}});
  EXPECT_EQ(s.out[1], static_cast<double>(0.6f));
  EXPECT_EQ(s.in[3], static_cast<double>(0.6f));
  EXPECT_EQ(s.in[1] + s.out[3] + s.in[0] + s.out[0] + s.in[2] + s.out[2], 0.0);
}

TEST(Strengths, ConservationAndOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto g = oracle::random_dag(rng);
    const auto s = strengths(g);
    std::vector<double> in, out;
    oracle::naive_strengths(g, in, out);
    EXPECT_EQ(s.in, in);
    EXPECT_EQ(s.out, out);
    double total = 0;
    for (const auto& e : g.edges) total += e.weight;
    EXPECT_NEAR(std::accumulate(s.in.begin(), s.in.end(), 0.0), total, 1e-12);
    EXPECT_NEAR(std::accumulate(s.out.begin(), s.out.end(), 0.0), total, 1e-12);
    EXPECT_EQ(density(g), oracle::naive_density(g));
  }
}

TEST(Betweenness, PathOfThree) {
  const auto b = betweenness(Digraph{3, {{0, 1, 1.0f}, {1, 2, 1.0f}}});
  EXPECT_DOUBLE_EQ(b[1], 0.5);
  EXPECT_EQ(b[0], 0.0);
  EXPECT_EQ(b[2], 0.0);
}

TEST(Betweenness, CompleteDagUniformIsZero) {
  Digraph g{6, {}};
  for (int i = 0; i < 6; ++i) {
    for (int j = i + 1; j < 6; ++j) g.edges.push_back({i, j, 0.8f});
  }
  for (double v : betweenness(g)) EXPECT_EQ(v, 0.0);
}

TEST(Betweenness, EmptyGraph) {
  for (double v : betweenness(Digraph{5, {}})) EXPECT_EQ(v, 0.0);
}

TEST(Betweenness, TiedPathsSplitCredit) {
  // 0->1->3 and 0->2->3 have equal length; direct 0->3 is longer.
  const auto b = betweenness(Digraph{4, {{0, 1, 1.0f}, {1, 3, 1.0f}, {0, 2, 1.0f}, {2, 3, 1.0f},
                                         {0, 3, 0.25f}}});
  EXPECT_DOUBLE_EQ(b[1], 0.5 / 6.0);
  EXPECT_DOUBLE_EQ(b[2], 0.5 / 6.0);
}

TEST(Betweenness, MatchesPathEnumeration) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 300; ++t) {
    oracle::DagOptions opts;
    opts.discrete_weights = t % 3 == 0;
    opts.edge_probability = 0.3 + 0.1 * (t % 6);
    const auto g = oracle::random_dag(rng, opts);
    const auto got = betweenness(g);
    const auto want = oracle::path_enumeration_betweenness(g);
    for (size_t v = 0; v < got.size(); ++v) EXPECT_NEAR(got[v], want[v], 1e-9) << t;
  }
}

TEST(Closeness, Star) {
  const Digraph g{4, {{0, 1, 1.0f}, {0, 2, 1.0f}, {0, 3, 1.0f}}};
  const auto out = closeness(g, Direction::kOut);
  EXPECT_DOUBLE_EQ(out[0], 1.0);
  EXPECT_EQ(out[1], 0.0);
  const auto in = closeness(g, Direction::kIn);
  EXPECT_EQ(in[0], 0.0);
  // Leaf reached by one node at distance 1: (1/1) * (1/3).
  EXPECT_DOUBLE_EQ(in[1], 1.0 / 3.0);
}

TEST(Closeness, MatchesFloydWarshall) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 300; ++t) {
    oracle::DagOptions opts;
    opts.discrete_weights = t % 2 == 0;
    const auto g = oracle::random_dag(rng, opts);
    for (bool outgoing : {true, false}) {
      const auto got = closeness(g, outgoing ? Direction::kOut : Direction::kIn);
      const auto want = oracle::floyd_closeness(g, outgoing);
      for (size_t v = 0; v < got.size(); ++v) {
        EXPECT_NEAR(got[v], want[v], 1e-9);
        EXPECT_GE(got[v], 0.0);
      }
    }
  }
}

TEST(Closeness, AtMostOneWhenWeightsAtMostOne) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    auto g = oracle::random_dag(rng);
    for (auto& e : g.edges) e.weight = std::min(e.weight, 1.0f);
    for (auto dir : {Direction::kOut, Direction::kIn}) {
      for (double v : closeness(g, dir)) EXPECT_LE(v, 1.0 + 1e-12);
    }
  }
}

TEST(Closeness, StrongEdgesExceedOne) {
  // d = 1/w = 0.5, so the reachable-set formula gives 2.
  const auto c = closeness(Digraph{2, {{0, 1, 2.0f}}}, Direction::kOut);
  EXPECT_DOUBLE_EQ(c[0], 2.0);
}

TEST(ScaleCovariance, BetweennessAndFlagsInvariant) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 50; ++t) {
    auto g = oracle::random_dag(rng);
    Digraph scaled = g;
    for (auto& e : scaled.edges) e.weight *= 0.5f;  // exact in binary
    EXPECT_EQ(betweenness(g), betweenness(scaled));
    const auto s = strengths(g), ss = strengths(scaled);
    for (size_t v = 0; v < s.in.size(); ++v) EXPECT_EQ(ss.in[v], 0.5 * s.in[v]);
    EXPECT_EQ(percentile_flags(s.out), percentile_flags(ss.out));
    EXPECT_EQ(percentile_flags(closeness(g, Direction::kOut)),
              percentile_flags(closeness(scaled, Direction::kOut)));
  }
}

TEST(Percentile, ZeroToNineteen) {
  std::vector<double> v(20);
  std::iota(v.begin(), v.end(), 0.0);
  EXPECT_NEAR(percentile(v, 95.0), 18.05, 1e-12);
  const auto f = percentile_flags(v);
  for (size_t i = 0; i < 20; ++i) EXPECT_EQ(f[i], i == 19);
}

TEST(Percentile, AllEqualNoFlags) {
  const std::vector<double> v(31, 0.7);
  for (bool f : percentile_flags(v)) EXPECT_FALSE(f);
}

TEST(Percentile, OneNonzeroAmongThirtyZeros) {
  std::vector<double> v(31, 0.0);
  v[12] = 0.01;
  const auto f = percentile_flags(v);
  for (size_t i = 0; i < 31; ++i) EXPECT_EQ(f[i], i == 12);
}

TEST(Percentile, DistinctValuesFlagAtMostCeilFivePercent) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n : {1, 2, 5, 19, 20, 21, 31, 40, 100}) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = u(rng);
    const auto f = percentile_flags(v);
    const long flagged = std::count(f.begin(), f.end(), true);
    EXPECT_LE(flagged, static_cast<long>(std::ceil(0.05 * n)));
  }
}

TEST(Histogram, Examples) {
  const auto h = weight_histogram(Digraph{3, {{0, 1, 0.6f}}});
  ASSERT_EQ(h.counts.size(), 40u);
  EXPECT_EQ(h.counts[12], 1);
  EXPECT_DOUBLE_EQ(h.bin_lo(12), 0.6);
  EXPECT_DOUBLE_EQ(h.bin_hi(12), 0.65);
  const auto empty = weight_histogram(Digraph{3, {}});
  for (long c : empty.counts) EXPECT_EQ(c, 0);
  const auto top = weight_histogram(Digraph{3, {{0, 1, 2.0f}, {1, 2, 0.0f}}});
  EXPECT_EQ(top.counts.back(), 1);
  EXPECT_EQ(top.counts.front(), 1);
}

TEST(Histogram, CountsSumToEdges) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 50; ++t) {
    const auto g = oracle::random_dag(rng);
    const auto h = weight_histogram(g);
    EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), 0L),
              static_cast<long>(g.edges.size()));
    for (const auto& e : g.edges) {
      const double w = e.weight;
      size_t bin = 0;
      while (bin + 1 < h.counts.size() && !(w < h.bin_hi(bin))) ++bin;
      EXPECT_GE(w, h.bin_lo(bin));
    }
  }
}

TEST(ComputeMetrics, RecordsPerComponent) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  ComponentGraph g;
  g.nodes = enumerate_components(c);
  g.topology = Digraph{static_cast<int>(g.nodes.size()), {{0, 1, 0.6f}, {1, 3, 1.2f}}};
  g.tau = 0.5;
  g.step = 8;
  const auto m = compute_metrics(g, 2.5);
  ASSERT_EQ(m.nodes.size(), g.nodes.size());
  EXPECT_EQ(m.nodes[0].component, "emb");
  EXPECT_EQ(m.nodes[0].step, 8);
  EXPECT_EQ(m.global.num_active_nodes, 3);
  EXPECT_EQ(m.global.num_edges, 2);
  EXPECT_DOUBLE_EQ(m.global.density, 2.0 / 6.0);
  EXPECT_EQ(m.global.correct_token_logit, 2.5);
  EXPECT_TRUE(m.nodes[1].top_betweenness);
  EXPECT_TRUE(m.nodes[1].top_out);
  EXPECT_FALSE(m.nodes[0].top_out);
}
