#include <gtest/gtest.h>

#include <regex>

#include "compgraph/csv.hpp"
#include "compgraph/error.hpp"
#include "compgraph/report.hpp"
#include "fixtures.hpp"
#include "xml_check.hpp"

using namespace compgraph;

namespace {

size_t count_of(const std::string& s, const std::string& needle) {
  size_t n = 0;
  for (size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

void write_global(const std::filesystem::path& p) {
  write_text_file(p,
                  "step,tau,num_nodes,num_edges,density,correct_token_logit\n"
                  "0,0.5,3,2,0.333333333,0\n"
                  "0,0.7,4,3,0.25,0\n"
                  "0,1,5,6,0.3,0\n"
                  "10,0.5,4,5,0.416666667,1.5\n"
                  "10,0.7,5,8,0.4,1.5\n"
                  "10,1,5,9,0.45,1.5\n"
                  "100,0.5,4,3,0.25,4.25\n"
                  "100,0.7,5,6,0.3,4.25\n"
                  "100,1,5,9,0.45,4.25\n");
}

std::string node_header() {
  return "step,tau,component,in_strength,out_strength,betweenness,closeness_out,closeness_in,"
         "top_in,top_out,top_betweenness,top_closeness_out\n";
}

}  // namespace

TEST(Timeseries, OnePolylinePerTau) {
  fixtures::TempDir dir("cg_report");
  write_global(dir / "g.csv");
  const std::string svg = timeseries_svg(dir / "g.csv", "num_edges");
  EXPECT_EQ(count_of(svg, "class=\"series\""), 3u);
  EXPECT_EQ(count_of(svg, "class=\"logit\""), 1u);
  EXPECT_NE(svg.find("tau=0.7"), std::string::npos);
  EXPECT_NE(svg.find("correct token logit"), std::string::npos);
  EXPECT_EQ(oracle::xml_problem(svg), "");
}

TEST(Timeseries, AllMetricsWellFormed) {
  fixtures::TempDir dir("cg_report");
  write_global(dir / "g.csv");
  for (auto m : kTimeseriesMetrics) {
    render_timeseries(dir / "g.csv", m, dir / "out.svg");
    EXPECT_EQ(oracle::xml_problem(fixtures::read_file(dir / "out.svg")), "") << m;
  }
}

TEST(Timeseries, Errors) {
  fixtures::TempDir dir("cg_report");
  write_global(dir / "g.csv");
  EXPECT_THROW(timeseries_svg(dir / "g.csv", "modularity"), UsageError);
  write_text_file(dir / "empty.csv", "step,tau,num_nodes,num_edges,density,correct_token_logit\n");
  try {
    timeseries_svg(dir / "empty.csv", "density");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no rows"), std::string::npos);
  }
}

TEST(Heatmap, OneFlaggedCellOneRect) {
  fixtures::TempDir dir("cg_report");
  std::string csv = node_header();
  for (long step : {0L, 1L, 2L}) {
    for (const char* comp : {"emb", "attn.z.0.0", "attn.z.0.1", "mlp_0"}) {
      const bool flag = step == 1 && std::string(comp) == "attn.z.0.1";
      csv += std::to_string(step) + ",0.7," + comp + ",0,0,0,0,0," + (flag ? "1" : "0") +
             ",0,0,0\n";
      csv += std::to_string(step) + ",0.9," + comp + ",0,0,0,0,0,1,1,1,1\n";
    }
  }
  write_text_file(dir / "n.csv", csv);
  const auto h = build_heatmap(dir / "n.csv", "top_in", 0.7);
  EXPECT_EQ(h.rows, (std::vector<std::string>{"emb", "attn.z.0.0", "attn.z.0.1", "mlp_0"}));
  EXPECT_EQ(h.steps, (std::vector<long>{0, 1, 2}));
  ASSERT_EQ(h.cells.size(), 4u);
  for (const auto& row : h.cells) EXPECT_EQ(row.size(), 3u);
  EXPECT_TRUE(h.cells[2][1]);
  const std::string svg = heatmap_svg(h);
  EXPECT_EQ(count_of(svg, "class=\"cell\""), 1u);
  EXPECT_EQ(count_of(svg, "class=\"row-label\""), 4u);
  EXPECT_EQ(oracle::xml_problem(svg), "");
  EXPECT_THROW(build_heatmap(dir / "n.csv", "top_in", 0.3), DataError);
  EXPECT_THROW(build_heatmap(dir / "n.csv", "top_everything", 0.7), UsageError);
}

TEST(Heatmap, RowsInStageOrderWhateverTheFileOrder) {
  fixtures::TempDir dir("cg_report");
  std::string csv = node_header();
  for (const char* comp : {"mlp_1", "attn.z.1.0", "mlp_0", "emb", "attn.z.0.0"}) {
    csv += std::string("5,0.7,") + comp + ",0,0,0,0,0,0,0,0,0\n";
  }
  write_text_file(dir / "n.csv", csv);
  const auto h = build_heatmap(dir / "n.csv", "top_out", 0.7);
  EXPECT_EQ(h.rows.front(), "emb");
  EXPECT_EQ(h.rows.back(), "mlp_1");
  EXPECT_EQ(h.rows, (std::vector<std::string>{"emb", "attn.z.0.0", "mlp_0", "attn.z.1.0", "mlp_1"}));
}

TEST(Heatmap, ColumnLabelsAtDecades) {
  HeatmapMatrix h;
  h.metric = "top_in";
  h.tau = 0.7;
  h.rows = {"emb"};
  h.steps = {0, 1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1000};
  h.cells = {std::vector<bool>(h.steps.size(), false)};
  const std::string svg = heatmap_svg(h);
  EXPECT_EQ(count_of(svg, "class=\"col-label\""), 4u);  // 0, 16, 128, 1000
  EXPECT_EQ(count_of(svg, "class=\"cell\""), 0u);
}

TEST(Heatmap, TextIsEscaped) {
  HeatmapMatrix h;
  h.metric = "a<b&c";
  h.rows = {"emb"};
  h.steps = {0};
  h.cells = {{true}};
  EXPECT_EQ(oracle::xml_problem(heatmap_svg(h)), "");
}

TEST(XmlCheck, CatchesProblems) {
  EXPECT_EQ(oracle::xml_problem("<svg><g/></svg>"), "");
  EXPECT_NE(oracle::xml_problem("<svg><g></svg>"), "");
  EXPECT_NE(oracle::xml_problem("<svg></svg><svg></svg>"), "");
  EXPECT_NE(oracle::xml_problem("<svg a=1></svg>"), "");
  EXPECT_NE(oracle::xml_problem("<svg>a & b</svg>"), "");
  EXPECT_NE(oracle::xml_problem(""), "");
}
