#include "compgraph/influence.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "compgraph/csv.hpp"
#include "compgraph/error.hpp"

namespace compgraph {
namespace fs = std::filesystem;

std::string_view to_string(ComparisonScope scope) {
  return scope == ComparisonScope::kLastPosition ? "last_position" : "all_positions";
}

ComparisonScope parse_scope(std::string_view text) {
  if (text == "all" || text == "all_positions") return ComparisonScope::kAllPositions;
  if (text == "last" || text == "last_position") return ComparisonScope::kLastPosition;
  throw UsageError("unknown comparison scope '" + std::string(text) + "'");
}

void AnalysisInput::validate(const ModelConfig& config) const {
  if (tokens.empty()) throw UsageError("analysis input has no tokens");
  if (target < 0 || target >= config.vocab_size) {
    throw UsageError("target " + std::to_string(target) + " out of range for vocab_size " +
                     std::to_string(config.vocab_size));
  }
}

AnalysisInput read_tokens_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tokens file " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError(path.string() + " is not a JSON object");
  AnalysisInput input;
  try {
    input.tokens = j.at("tokens").get<std::vector<int>>();
    input.target = j.at("target").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad tokens file " + path.string() + ": " + e.what());
  }
  if (input.tokens.empty()) throw DataError("tokens file " + path.string() + " has no tokens");
  return input;
}

void write_tokens_file(const AnalysisInput& input, const fs::path& path) {
  nlohmann::ordered_json j;
  j["tokens"] = input.tokens;
  j["target"] = input.target;
  write_text_file(path, j.dump() + "\n");
}

namespace {

template <class T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw UsageError("cosine: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

}  // namespace

double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }
double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

bool pair_allowed(const ComponentId& src, const ComponentId& dst, bool strict_layer_order) {
  if (strict_layer_order) return src.layer() < dst.layer();
  return src.stage() < dst.stage();
}

InfluenceMatrix::InfluenceMatrix(std::vector<ComponentId> components, bool strict_layer_order)
    : components_(std::move(components)),
      strict_(strict_layer_order),
      values_(components_.size() * components_.size(),
              std::numeric_limits<float>::quiet_NaN()) {}

bool InfluenceMatrix::allowed(std::size_t src, std::size_t dst) const {
  return src < size() && dst < size() && pair_allowed(components_[src], components_[dst], strict_);
}

std::optional<float> InfluenceMatrix::at(std::size_t src, std::size_t dst) const {
  if (!allowed(src, dst)) return std::nullopt;
  const float v = values_[src * size() + dst];
  if (std::isnan(v)) return std::nullopt;
  return v;
}

void InfluenceMatrix::set(std::size_t src, std::size_t dst, float similarity) {
  if (!allowed(src, dst)) throw UsageError("influence pair is not allowed");
  if (!(similarity >= -1.0f && similarity <= 1.0f)) {
    throw UsageError("cosine similarity outside [-1, 1]");
  }
  values_[src * size() + dst] = similarity;
}

std::size_t InfluenceMatrix::num_defined() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t j = 0; j < size(); ++j) n += at(i, j).has_value();
  }
  return n;
}

InfluenceMatrix influence_matrix(const ModelWeights& weights, const ModelConfig& config,
                                 const AnalysisInput& input, const InfluenceOptions& options) {
  input.validate(config);
  const ForwardRecord clean = forward(weights, config, input.tokens);

  InfluenceMatrix m(enumerate_components(config), options.strict_layer_order);
  m.tokens = input.tokens;
  m.target = input.target;
  m.correct_token_logit = correct_token_logit(clean, input.target);

  const bool last_only = input.scope == ComparisonScope::kLastPosition;
  auto view = [last_only](const Matrix<float>& t) {
    const Eigen::Index off = last_only ? (t.rows() - 1) * t.cols() : 0;
    const Eigen::Index len = last_only ? t.cols() : t.size();
    return std::span<const float>(t.data() + off, static_cast<size_t>(len));
  };

  const size_t n = m.size();
  auto run_source = [&](size_t i) {
    const ComponentId& src = m.components()[i];
    bool any = false;
    for (size_t j = 0; j < n; ++j) any = any || m.allowed(i, j);
    if (!any) return;
    const ForwardRecord ablated = forward(weights, config, input.tokens, src);
    for (size_t j = 0; j < n; ++j) {
      if (!m.allowed(i, j)) continue;
      const double s = cosine(view(clean.contributions[j]), view(ablated.contributions[j]));
      m.set(i, j, static_cast<float>(s));
    }
  };

  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    for (size_t i = 0; i < n; ++i) run_source(i);
  } else {
    // Each worker writes disjoint rows.
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(threads));
    {
      std::vector<std::jthread> pool;
      for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (size_t i = next++; i < n; i = next++) run_source(i);
          } catch (...) {
            errors[static_cast<size_t>(t)] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return m;
}

namespace {

fs::path sidecar_path(const fs::path& csv_path) {
  fs::path p = csv_path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void write_influence_csv(const InfluenceMatrix& matrix, const fs::path& csv_path) {
  std::ostringstream out;
  out << "src,dst,cosine\n";
  const auto& comps = matrix.components();
  for (size_t i = 0; i < matrix.size(); ++i) {
    for (size_t j = 0; j < matrix.size(); ++j) {
      if (auto s = matrix.at(i, j)) {
        out << comps[i].name() << ',' << comps[j].name() << ',' << format_number(*s) << '\n';
      }
    }
  }
  write_text_file(csv_path, out.str());

  nlohmann::ordered_json side;
  side["step"] = matrix.step;
  side["tau_independent"] = true;
  side["correct_token_logit"] = matrix.correct_token_logit;
  side["strict_layer_order"] = matrix.strict_layer_order();
  write_text_file(sidecar_path(csv_path), side.dump() + "\n");
}

InfluenceMatrix read_influence_csv(const fs::path& csv_path) {
  const CsvTable table = read_csv(csv_path);
  const size_t c_src = table.column("src");
  const size_t c_dst = table.column("dst");
  const size_t c_cos = table.column("cosine");

  std::vector<ComponentId> comps;
  for (const auto& row : table.rows) {
    for (size_t c : {c_src, c_dst}) {
      ComponentId id = ComponentId::parse(row[c]);
      if (std::find(comps.begin(), comps.end(), id) == comps.end()) comps.push_back(id);
    }
  }
  std::sort(comps.begin(), comps.end());

  bool strict = false;
  double logit = 0.0;
  long step = 0;
  if (const fs::path side = sidecar_path(csv_path); fs::exists(side)) {
    std::ifstream in(side);
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("bad sidecar " + side.string());
    strict = j.value("strict_layer_order", false);
    logit = j.value("correct_token_logit", 0.0);
    step = j.value("step", 0L);
  }
  InfluenceMatrix m(comps, strict);
  m.step = step;
  m.correct_token_logit = logit;
  auto index_of = [&](const std::string& name) {
    const ComponentId id = ComponentId::parse(name);
    return static_cast<size_t>(std::find(comps.begin(), comps.end(), id) - comps.begin());
  };
  for (const auto& row : table.rows) {
    const size_t i = index_of(row[c_src]);
    const size_t j = index_of(row[c_dst]);
    if (!m.allowed(i, j)) {
      throw DataError("influence pair " + row[c_src] + "->" + row[c_dst] + " violates order");
    }
    m.set(i, j, parse_float(row[c_cos]));
  }
  return m;
}

}  // namespace compgraph
