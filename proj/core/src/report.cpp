#include "compgraph/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "compgraph/components.hpp"
#include "compgraph/csv.hpp"
#include "compgraph/error.hpp"

namespace compgraph {
namespace fs = std::filesystem;

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

bool same_tau(double a, double b) { return std::abs(a - b) <= 1e-9; }

class SvgWriter {
 public:
  SvgWriter(double width, double height) {
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
         << fmt(height) << "\" viewBox=\"0 0 " << fmt(width) << ' ' << fmt(height)
         << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
         << "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" << fmt(width) << "\" height=\""
         << fmt(height) << "\" fill=\"none\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, std::string_view stroke,
            std::string_view extra = "") {
    out_ << "<line x1=\"" << fmt(x1) << "\" y1=\"" << fmt(y1) << "\" x2=\"" << fmt(x2)
         << "\" y2=\"" << fmt(y2) << "\" stroke=\"" << stroke << "\"" << extra << "/>\n";
  }

  void text(double x, double y, std::string_view content, std::string_view anchor = "start",
            std::string_view extra = "") {
    out_ << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" text-anchor=\"" << anchor
         << "\"" << extra << ">" << escape(content) << "</text>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, std::string_view stroke,
                std::string_view cls, std::string_view extra = "") {
    out_ << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << stroke
         << "\" stroke-width=\"1.5\"" << extra << " points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      out_ << (i ? " " : "") << fmt(pts[i].first) << ',' << fmt(pts[i].second);
    }
    out_ << "\"/>\n";
  }

  void rect(double x, double y, double w, double h, std::string_view fill, std::string_view cls,
            std::string_view extra = "") {
    out_ << "<rect class=\"" << cls << "\" x=\"" << fmt(x) << "\" y=\"" << fmt(y)
         << "\" width=\"" << fmt(w) << "\" height=\"" << fmt(h) << "\" fill=\"" << fill << "\""
         << extra << "/>\n";
  }

  void path(std::string_view d, std::string_view stroke) {
    out_ << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << stroke << "\"/>\n";
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  std::ostringstream out_;
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  void widen() {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

// Decade ticks (0, 10, 100, ...) on the log10(step + 1) axis.
std::vector<long> decade_ticks(long max_step) {
  std::vector<long> ticks{0, 1};
  for (long p = 10; p <= max_step; p *= 10) ticks.push_back(p);
  return ticks;
}

}  // namespace

std::string timeseries_svg(const fs::path& global_csv, std::string_view metric) {
  if (std::find(std::begin(kTimeseriesMetrics), std::end(kTimeseriesMetrics), metric) ==
      std::end(kTimeseriesMetrics)) {
    throw UsageError("unknown metric '" + std::string(metric) + "'");
  }
  const CsvTable t = read_csv(global_csv);
  if (t.rows.empty()) throw DataError("no rows in " + global_csv.string());
  const size_t c_step = t.column("step");
  const size_t c_tau = t.column("tau");
  const size_t c_val = t.column(metric);
  const size_t c_logit = t.column("correct_token_logit");

  std::map<double, std::vector<std::pair<long, double>>> series;
  std::map<long, double> logit;
  for (const auto& row : t.rows) {
    const long step = parse_long(row[c_step]);
    series[parse_double(row[c_tau])].push_back({step, parse_double(row[c_val])});
    logit.emplace(step, parse_double(row[c_logit]));
  }
  Range xr{0.0, 0.0};
  Range yr{0.0, 0.0};
  Range lr{logit.begin()->second, logit.begin()->second};
  for (auto& [tau, pts] : series) {
    std::sort(pts.begin(), pts.end());
    for (auto [s, v] : pts) {
      xr.hi = std::max(xr.hi, std::log10(static_cast<double>(s) + 1.0));
      yr.hi = std::max(yr.hi, v);
      yr.lo = std::min(yr.lo, v);
    }
  }
  for (auto [s, v] : logit) {
    lr.lo = std::min(lr.lo, v);
    lr.hi = std::max(lr.hi, v);
  }
  xr.widen();
  yr.widen();
  lr.widen();

  const double width = 720, height = 420;
  const double left = 70, right = 70, top = 40, bottom = 60;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](long step) {
    return left + (std::log10(static_cast<double>(step) + 1.0) - xr.lo) / (xr.hi - xr.lo) * pw;
  };
  auto py = [&](double v, const Range& r) { return top + ph - (v - r.lo) / (r.hi - r.lo) * ph; };

  SvgWriter svg(width, height);
  svg.text(width / 2, 22, std::string(metric) + " vs. training step", "middle",
           " font-size=\"14\"");
  svg.path("M" + fmt(left) + "," + fmt(top) + " V" + fmt(top + ph) + " H" + fmt(left + pw) +
               " V" + fmt(top),
           "#333333");
  const long max_step = logit.rbegin()->first;
  for (long tick : decade_ticks(max_step)) {
    if (std::log10(static_cast<double>(tick) + 1.0) > xr.hi + 1e-12) break;
    const double x = px(tick);
    svg.line(x, top + ph, x, top + ph + 5, "#333333");
    svg.text(x, top + ph + 18, std::to_string(tick), "middle");
  }
  svg.text(left + pw / 2, height - 18, "training step (log scale, step + 1)", "middle");
  for (int i = 0; i <= 4; ++i) {
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double lv = lr.lo + (lr.hi - lr.lo) * i / 4.0;
    const double y = py(yv, yr);
    svg.line(left - 5, y, left, y, "#333333");
    svg.text(left - 8, y + 4, label(yv), "end");
    svg.line(left + pw, y, left + pw + 5, y, "#888888");
    svg.text(left + pw + 8, y + 4, label(lv), "start", " fill=\"#888888\"");
  }
  svg.text(16, top + ph / 2, std::string(metric), "middle",
           " transform=\"rotate(-90 16 " + fmt(top + ph / 2) + ")\"");
  svg.text(width - 14, top + ph / 2, "correct token logit", "middle",
           " fill=\"#888888\" transform=\"rotate(90 " + fmt(width - 14) + " " +
               fmt(top + ph / 2) + ")\"");

  std::vector<std::pair<double, double>> logit_pts;
  for (auto [s, v] : logit) logit_pts.push_back({px(s), py(v, lr)});
  svg.polyline(logit_pts, "#888888", "logit", " stroke-dasharray=\"4 3\"");

  size_t k = 0;
  for (const auto& [tau, pts] : series) {
    std::vector<std::pair<double, double>> xy;
    for (auto [s, v] : pts) xy.push_back({px(s), py(v, yr)});
    const char* color = kPalette[k % std::size(kPalette)];
    svg.polyline(xy, color, "series");
    const double ly = top + 12 + 14.0 * static_cast<double>(k);
    svg.line(left + 10, ly - 4, left + 28, ly - 4, color, " stroke-width=\"2\"");
    svg.text(left + 32, ly, "tau=" + format_tau(tau));
    ++k;
  }
  const double ly = top + 12 + 14.0 * static_cast<double>(k);
  svg.line(left + 10, ly - 4, left + 28, ly - 4, "#888888", " stroke-dasharray=\"4 3\"");
  svg.text(left + 32, ly, "correct token logit");
  return svg.finish();
}

void render_timeseries(const fs::path& global_csv, std::string_view metric,
                       const fs::path& out_svg) {
  write_text_file(out_svg, timeseries_svg(global_csv, metric));
}

HeatmapMatrix build_heatmap(const fs::path& node_csv, std::string_view flag_column, double tau) {
  if (std::find(std::begin(kFlagColumns), std::end(kFlagColumns), flag_column) ==
      std::end(kFlagColumns)) {
    throw UsageError("unknown flag column '" + std::string(flag_column) + "'");
  }
  const CsvTable t = read_csv(node_csv);
  const size_t c_step = t.column("step");
  const size_t c_tau = t.column("tau");
  const size_t c_comp = t.column("component");
  const size_t c_flag = t.column(flag_column);

  std::set<ComponentId> comps;
  std::set<long> steps;
  std::map<std::pair<std::string, long>, bool> flags;
  for (const auto& row : t.rows) {
    if (!same_tau(parse_double(row[c_tau]), tau)) continue;
    const long step = parse_long(row[c_step]);
    comps.insert(ComponentId::parse(row[c_comp]));
    steps.insert(step);
    flags[{row[c_comp], step}] = row[c_flag] == "1";
  }
  if (steps.empty()) {
    throw DataError("tau " + format_tau(tau) + " absent from " + node_csv.string());
  }
  HeatmapMatrix h;
  h.metric = std::string(flag_column);
  h.tau = tau;
  for (const auto& c : comps) h.rows.push_back(c.name());
  h.steps.assign(steps.begin(), steps.end());
  for (const auto& name : h.rows) {
    std::vector<bool> row;
    for (long s : h.steps) {
      auto it = flags.find({name, s});
      row.push_back(it != flags.end() && it->second);
    }
    h.cells.push_back(std::move(row));
  }
  return h;
}

std::string heatmap_svg(const HeatmapMatrix& h) {
  const double cell_w = 14, cell_h = 14;
  const double left = 90, top = 40, bottom = 60;
  const double gw = cell_w * static_cast<double>(h.steps.size());
  const double gh = cell_h * static_cast<double>(h.rows.size());
  const double width = left + gw + 20;
  const double height = top + gh + bottom;
  SvgWriter svg(width, height);
  svg.text(left, 22, h.metric + " > 95th percentile, tau=" + format_tau(h.tau), "start",
           " font-size=\"13\"");
  for (size_t r = 0; r < h.rows.size(); ++r) {
    const double y = top + cell_h * static_cast<double>(r);
    svg.text(left - 6, y + cell_h - 3, h.rows[r], "end", " class=\"row-label\"");
    for (size_t c = 0; c < h.steps.size(); ++c) {
      if (h.cells[r][c]) {
        svg.rect(left + cell_w * static_cast<double>(c), y, cell_w, cell_h, "#2ca02c", "cell");
      }
    }
  }
  std::ostringstream grid;
  for (size_t r = 0; r <= h.rows.size(); ++r) {
    const double y = top + cell_h * static_cast<double>(r);
    grid << "M" << fmt(left) << "," << fmt(y) << " H" << fmt(left + gw) << " ";
  }
  for (size_t c = 0; c <= h.steps.size(); ++c) {
    const double x = left + cell_w * static_cast<double>(c);
    grid << "M" << fmt(x) << "," << fmt(top) << " V" << fmt(top + gh) << " ";
  }
  svg.path(grid.str(), "#dddddd");
  // Label the first column at or beyond each power of ten.
  long next_tick = 0;
  for (size_t c = 0; c < h.steps.size(); ++c) {
    if (h.steps[c] < next_tick) continue;
    const double x = left + cell_w * (static_cast<double>(c) + 0.5);
    const double y = top + gh + 10;
    svg.text(x, y, std::to_string(h.steps[c]), "end",
             " class=\"col-label\" transform=\"rotate(-60 " + fmt(x) + " " + fmt(y) + ")\"");
    next_tick = next_tick == 0 ? 10 : next_tick * 10;
    while (next_tick <= h.steps[c]) next_tick *= 10;
  }
  svg.text(left + gw / 2, height - 6, "training step", "middle");
  return svg.finish();
}

void render_heatmap(const fs::path& node_csv, std::string_view flag_column, double tau,
                    const fs::path& out_svg) {
  write_text_file(out_svg, heatmap_svg(build_heatmap(node_csv, flag_column, tau)));
}

void render_weight_distribution(const fs::path& hist_csv, double tau, const fs::path& out_svg) {
  const CsvTable t = read_csv(hist_csv);
  const size_t c_step = t.column("step");
  const size_t c_tau = t.column("tau");
  const size_t c_lo = t.column("bin_lo");
  const size_t c_count = t.column("count");
  std::map<long, std::vector<std::pair<double, long>>> by_step;
  long max_count = 0;
  for (const auto& row : t.rows) {
    if (!same_tau(parse_double(row[c_tau]), tau)) continue;
    const long count = parse_long(row[c_count]);
    by_step[parse_long(row[c_step])].push_back({parse_double(row[c_lo]), count});
    max_count = std::max(max_count, count);
  }
  if (by_step.empty()) throw DataError("tau " + format_tau(tau) + " absent from " + hist_csv.string());
  const size_t bins = by_step.begin()->second.size();
  const double cell_w = 14, cell_h = 8;
  const double left = 60, top = 40, bottom = 60;
  const double gw = cell_w * static_cast<double>(by_step.size());
  const double gh = cell_h * static_cast<double>(bins);
  SvgWriter svg(left + gw + 20, top + gh + bottom);
  svg.text(left, 22, "edge weight distribution, tau=" + format_tau(tau), "start",
           " font-size=\"13\"");
  size_t c = 0;
  for (auto& [step, cells] : by_step) {
    std::sort(cells.begin(), cells.end());
    for (size_t b = 0; b < cells.size(); ++b) {
      if (cells[b].second == 0) continue;
      const double shade = std::log1p(static_cast<double>(cells[b].second)) /
                           std::log1p(static_cast<double>(std::max(1L, max_count)));
      const double y = top + gh - cell_h * static_cast<double>(b + 1);
      svg.rect(left + cell_w * static_cast<double>(c), y, cell_w, cell_h, "#1f77b4", "bin",
               " fill-opacity=\"" + fmt(0.15 + 0.85 * shade) + "\"");
    }
    ++c;
  }
  svg.path("M" + fmt(left) + "," + fmt(top) + " V" + fmt(top + gh) + " H" + fmt(left + gw),
           "#333333");
  for (int i = 0; i <= 4; ++i) {
    const double y = top + gh - gh * i / 4.0;
    svg.text(left - 6, y + 4, label(0.5 * i), "end");
  }
  svg.text(left + gw / 2, top + gh + 40, "checkpoint (ascending step)", "middle");
  write_text_file(out_svg, svg.finish());
}

std::vector<fs::path> render_report(const fs::path& dir, double tau) {
  const fs::path figures = dir / "figures";
  fs::create_directories(figures);
  std::vector<fs::path> out;
  for (std::string_view metric : kTimeseriesMetrics) {
    fs::path p = figures / ("evolution_" + std::string(metric) + ".svg");
    render_timeseries(dir / "global_metrics.csv", metric, p);
    out.push_back(p);
  }
  for (std::string_view flag : kFlagColumns) {
    fs::path p = figures / ("heatmap_" + std::string(flag) + "_tau" + format_tau(tau) + ".svg");
    render_heatmap(dir / "node_metrics.csv", flag, tau, p);
    out.push_back(p);
  }
  fs::path p = figures / ("weight_distribution_tau" + format_tau(tau) + ".svg");
  render_weight_distribution(dir / "weight_hist.csv", tau, p);
  out.push_back(p);
  return out;
}

}  // namespace compgraph
