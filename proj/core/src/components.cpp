#include "compgraph/components.hpp"

#include <charconv>
#include <string>

#include "compgraph/error.hpp"

namespace compgraph {
namespace {

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && out >= 0;
}

}  // namespace

ComponentId ComponentId::parse(std::string_view name) {
  if (name == "emb") return emb();
  if (name.starts_with("mlp_")) {
    int layer = 0;
    if (parse_int(name.substr(4), layer)) return mlp(layer);
  } else if (name.starts_with("attn.z.")) {
    std::string_view rest = name.substr(7);
    auto dot = rest.find('.');
    int layer = 0;
    int head = 0;
    if (dot != std::string_view::npos && parse_int(rest.substr(0, dot), layer) &&
        parse_int(rest.substr(dot + 1), head)) {
      return attn_head(layer, head);
    }
  }
  throw DataError("unknown component name '" + std::string(name) + "'");
}

int ComponentId::stage() const {
  switch (kind_) {
    case Kind::kEmb: return 0;
    case Kind::kAttnHead: return 2 * layer_ + 1;
    case Kind::kMlp: return 2 * layer_ + 2;
  }
  return -1;
}

std::string ComponentId::name() const {
  switch (kind_) {
    case Kind::kEmb: return "emb";
    case Kind::kAttnHead:
      return "attn.z." + std::to_string(layer_) + "." + std::to_string(head_);
    case Kind::kMlp: return "mlp_" + std::to_string(layer_);
  }
  return {};
}

int ComponentId::index(const ModelConfig& config) const {
  const int per_layer = config.n_heads + 1;
  switch (kind_) {
    case Kind::kEmb: return 0;
    case Kind::kAttnHead: return 1 + layer_ * per_layer + head_;
    case Kind::kMlp: return 1 + layer_ * per_layer + config.n_heads;
  }
  return -1;
}

std::strong_ordering ComponentId::operator<=>(const ComponentId& other) const {
  if (auto c = stage() <=> other.stage(); c != 0) return c;
  return head_ <=> other.head_;
}

std::vector<ComponentId> enumerate_components(const ModelConfig& config) {
  std::vector<ComponentId> out;
  out.reserve(static_cast<size_t>(config.num_components()));
  out.push_back(ComponentId::emb());
  for (int l = 0; l < config.n_layers; ++l) {
    for (int h = 0; h < config.n_heads; ++h) out.push_back(ComponentId::attn_head(l, h));
    out.push_back(ComponentId::mlp(l));
  }
  return out;
}

void check_component(const ComponentId& id, const ModelConfig& config) {
  if (id.kind() == ComponentId::Kind::kEmb) return;
  if (id.layer() < 0 || id.layer() >= config.n_layers) {
    throw UsageError("component " + id.name() + " has layer out of range");
  }
  if (id.kind() == ComponentId::Kind::kAttnHead &&
      (id.head() < 0 || id.head() >= config.n_heads)) {
    throw UsageError("component " + id.name() + " has head out of range");
  }
}

}  // namespace compgraph
