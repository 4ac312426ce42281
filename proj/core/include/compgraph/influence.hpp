#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "compgraph/components.hpp"
#include "compgraph/model.hpp"

namespace compgraph {

enum class ComparisonScope { kAllPositions, kLastPosition };

std::string_view to_string(ComparisonScope scope);
// Accepts "all"/"all_positions" and "last"/"last_position".
ComparisonScope parse_scope(std::string_view text);

struct AnalysisInput {
  std::vector<int> tokens;
  int target = 0;
  ComparisonScope scope = ComparisonScope::kAllPositions;

  void validate(const ModelConfig& config) const;
};

// {"tokens":[int,...],"target":int}
AnalysisInput read_tokens_file(const std::filesystem::path& path);
void write_tokens_file(const AnalysisInput& input, const std::filesystem::path& path);

// a.b / (|a| |b|), or 0 when either norm is below 1e-12.
double cosine(std::span<const float> a, std::span<const float> b);
double cosine(std::span<const double> a, std::span<const double> b);

// Whether `src` can influence `dst`: stage order by default, strictly
// increasing transformer layer when `strict_layer_order` is set.
bool pair_allowed(const ComponentId& src, const ComponentId& dst, bool strict_layer_order);

// Cosine similarity between each later component's clean and ablated
// outputs; row i is the ablated source.
class InfluenceMatrix {
 public:
  InfluenceMatrix() = default;
  InfluenceMatrix(std::vector<ComponentId> components, bool strict_layer_order);

  const std::vector<ComponentId>& components() const { return components_; }
  std::size_t size() const { return components_.size(); }
  bool strict_layer_order() const { return strict_; }

  bool allowed(std::size_t src, std::size_t dst) const;
  // nullopt for pairs that are not allowed or were never set.
  std::optional<float> at(std::size_t src, std::size_t dst) const;
  // Throws UsageError for disallowed pairs or values outside [-1, 1].
  void set(std::size_t src, std::size_t dst, float similarity);
  std::size_t num_defined() const;

  long step = 0;
  std::vector<int> tokens;
  int target = 0;
  double correct_token_logit = 0.0;

 private:
  std::vector<ComponentId> components_;
  bool strict_ = false;
  std::vector<float> values_;  // NaN marks absent entries
};

struct InfluenceOptions {
  bool strict_layer_order = false;
  // Worker threads for the ablated passes; rows are independent so the
  // result does not depend on this.
  int threads = 1;
};

// One clean pass plus one ablated pass per component.
InfluenceMatrix influence_matrix(const ModelWeights& weights, const ModelConfig& config,
                                 const AnalysisInput& input, const InfluenceOptions& options = {});

// `src,dst,cosine` rows for every defined pair plus a sidecar with the same
// stem and a .json extension.
void write_influence_csv(const InfluenceMatrix& matrix, const std::filesystem::path& csv_path);
InfluenceMatrix read_influence_csv(const std::filesystem::path& csv_path);

}  // namespace compgraph
