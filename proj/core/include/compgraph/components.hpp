#pragma once

#include <compare>
#include <string>
#include <string_view>
#include <vector>

#include "compgraph/model_config.hpp"

namespace compgraph {

// One additive contributor to the residual stream.
class ComponentId {
 public:
  enum class Kind { kEmb, kAttnHead, kMlp };

  static ComponentId emb() { return ComponentId(Kind::kEmb, -1, -1); }
  static ComponentId attn_head(int layer, int head) {
    return ComponentId(Kind::kAttnHead, layer, head);
  }
  static ComponentId mlp(int layer) { return ComponentId(Kind::kMlp, layer, -1); }

  // Inverse of name(); throws DataError on anything else.
  static ComponentId parse(std::string_view name);

  Kind kind() const { return kind_; }
  // -1 for the embedding.
  int layer() const { return layer_; }
  // -1 unless kind() == kAttnHead.
  int head() const { return head_; }

  // 0 for emb, 2l+1 for heads of layer l, 2l+2 for mlp_l.
  int stage() const;
  // "emb", "attn.z.{l}.{h}" or "mlp_{l}".
  std::string name() const;
  // Position in the stage-ordered component list of `config`.
  int index(const ModelConfig& config) const;

  bool operator==(const ComponentId&) const = default;
  // Computation order: stage, then head.
  std::strong_ordering operator<=>(const ComponentId& other) const;

 private:
  ComponentId(Kind kind, int layer, int head) : kind_(kind), layer_(layer), head_(head) {}

  Kind kind_;
  int layer_;
  int head_;
};

// All components of `config`, sorted by stage (ties by head).
std::vector<ComponentId> enumerate_components(const ModelConfig& config);

// Throws UsageError if `id` does not exist in `config`.
void check_component(const ComponentId& id, const ModelConfig& config);

}  // namespace compgraph
