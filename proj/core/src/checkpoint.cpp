#include "compgraph/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "compgraph/error.hpp"

namespace compgraph {
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

ordered_json config_json(const ModelConfig& c) {
  ordered_json j;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_model"] = c.d_model;
  j["d_head"] = c.d_head;
  j["d_mlp"] = c.d_mlp;
  j["vocab_size"] = c.vocab_size;
  j["n_ctx"] = c.n_ctx;
  j["block_style"] = std::string(to_string(c.block_style));
  j["pos_style"] = std::string(to_string(c.pos_style));
  j["rotary_base"] = c.rotary_base;
  j["rotary_dim"] = c.rotary_dim;
  j["ln_eps"] = c.ln_eps;
  j["mlp_activation"] = std::string(to_string(c.mlp_activation));
  return j;
}

ModelConfig config_from(const ordered_json& j) {
  try {
    ModelConfig c;
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_head = j.at("d_head").get<int>();
    c.d_mlp = j.at("d_mlp").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.n_ctx = j.at("n_ctx").get<int>();
    c.block_style = parse_block_style(j.at("block_style").get<std::string>());
    c.pos_style = parse_pos_style(j.at("pos_style").get<std::string>());
    c.rotary_base = j.value("rotary_base", 10000.0);
    c.rotary_dim = j.value("rotary_dim", 0);
    c.ln_eps = j.at("ln_eps").get<double>();
    c.mlp_activation = parse_mlp_activation(j.value("mlp_activation", std::string("gelu_tanh")));
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad model config: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(e.what());
  }
}

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig model_config_from_json(std::string_view json) {
  ordered_json j = ordered_json::parse(json, nullptr, false);
  if (j.is_discarded()) throw DataError("model config is not valid JSON");
  return config_from(j);
}

void save_checkpoint(const ModelWeights& weights, const ModelConfig& config, long step,
                     const fs::path& path) {
  config.validate();
  check_shapes(weights, config);
  ordered_json header;
  std::uint64_t offset = 0;
  const auto params = parameters(weights, config);
  for (const auto& p : params) {
    const std::uint64_t bytes = p.values.size() * sizeof(float);
    header[p.name] = {{"dtype", "f32"}, {"shape", p.shape}, {"offset", offset}, {"byte_len", bytes}};
    offset += bytes;
  }
  ordered_json meta = config_json(config);
  meta["step"] = step;
  header["metadata"] = meta;
  const std::string header_text = header.dump();

  std::string blob;
  blob.reserve(12 + header_text.size() + offset);
  blob.append(kContainerMagic);
  put_u64_le(blob, header_text.size());
  blob.append(header_text);
  for (const auto& p : params) {
    for (float f : p.values) {
      const auto bits = std::bit_cast<std::uint32_t>(f);
      for (int i = 0; i < 4; ++i) blob.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
  }

  const fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 12) throw DataError("file too short for a container header" + where);
  if (std::memcmp(bytes.data(), kContainerMagic.data(), 4) != 0) {
    throw DataError("bad magic" + where);
  }
  const std::uint64_t header_len = get_u64_le(bytes.data() + 4);
  if (header_len > bytes.size() - 12) throw DataError("truncated header" + where);
  const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + 12);
  ordered_json header =
      ordered_json::parse(header_begin, header_begin + header_len, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    throw DataError("header is not a JSON object" + where);
  }
  if (!header.contains("metadata")) throw DataError("header lacks metadata" + where);

  LoadedCheckpoint out;
  out.config = config_from(header["metadata"]);
  out.step = header["metadata"].value("step", 0L);
  out.weights = zero_weights<float>(out.config);

  const unsigned char* payload = bytes.data() + 12 + header_len;
  const std::uint64_t payload_len = bytes.size() - 12 - header_len;
  auto params = parameters(out.weights, out.config);
  if (header.size() != params.size() + 1) {
    for (auto it = header.begin(); it != header.end(); ++it) {
      if (it.key() == "metadata") continue;
      const bool known = std::any_of(params.begin(), params.end(),
                                     [&](const auto& p) { return p.name == it.key(); });
      if (!known) throw DataError("unexpected tensor " + it.key() + where);
    }
  }

  std::uint64_t expected_offset = 0;
  for (auto& p : params) {
    if (!header.contains(p.name)) throw DataError("missing tensor " + p.name + where);
    const auto& entry = header[p.name];
    std::vector<std::int64_t> shape;
    std::uint64_t offset = 0;
    std::uint64_t byte_len = 0;
    try {
      if (entry.at("dtype").get<std::string>() != "f32") {
        throw DataError("tensor " + p.name + " has unsupported dtype" + where);
      }
      shape = entry.at("shape").get<std::vector<std::int64_t>>();
      offset = entry.at("offset").get<std::uint64_t>();
      byte_len = entry.at("byte_len").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed entry for " + p.name + ": " + e.what() + where);
    }
    if (shape != p.shape) {
      throw DataError("shape mismatch for " + p.name + " against embedded config" + where);
    }
    if (byte_len != p.values.size() * sizeof(float)) {
      throw DataError("byte_len of " + p.name + " disagrees with its shape" + where);
    }
    if (offset != expected_offset) {
      throw DataError("tensor " + p.name + " is not packed contiguously" + where);
    }
    if (offset + byte_len > payload_len) {
      throw DataError("truncated payload: tensor " + p.name + " is missing" + where);
    }
    const unsigned char* src = payload + offset;
    size_t non_finite = 0;
    for (size_t i = 0; i < p.values.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | src[4 * i + static_cast<size_t>(b)];
      const float f = std::bit_cast<float>(bits);
      if (!std::isfinite(f)) ++non_finite;
      p.values[i] = f;
    }
    if (non_finite > 0) {
      out.warnings.push_back(p.name + " has " + std::to_string(non_finite) + " non-finite values");
    }
    expected_offset = offset + byte_len;
  }
  if (expected_offset != payload_len) {
    throw DataError("payload has " + std::to_string(payload_len - expected_offset) +
                    " trailing bytes" + where);
  }
  return out;
}

void check_manifest_steps(const std::vector<CheckpointEntry>& entries) {
  for (size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].step == entries[i - 1].step) {
      throw DataError("duplicate step " + std::to_string(entries[i].step) + " in manifest");
    }
    if (entries[i].step < entries[i - 1].step) {
      throw DataError("unsorted manifest: step " + std::to_string(entries[i].step) +
                      " follows " + std::to_string(entries[i - 1].step));
    }
  }
}

CheckpointManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  ordered_json j = ordered_json::parse(in, nullptr, false);
  if (j.is_discarded()) throw DataError("manifest " + path.string() + " is not valid JSON");
  if (!j.contains("model_config") || !j.contains("checkpoints") || !j["checkpoints"].is_array()) {
    throw DataError("manifest needs model_config and a checkpoints array");
  }
  CheckpointManifest m;
  m.model_config = config_from(j["model_config"]);
  const fs::path base = path.parent_path();
  for (const auto& e : j["checkpoints"]) {
    if (!e.contains("step") || !e.contains("path")) {
      throw DataError("manifest entry needs step and path");
    }
    CheckpointEntry entry;
    entry.step = e["step"].get<long>();
    entry.path = e["path"].get<std::string>();
    if (entry.path.is_relative()) entry.path = base / entry.path;
    m.checkpoints.push_back(std::move(entry));
  }
  check_manifest_steps(m.checkpoints);
  for (const auto& e : m.checkpoints) {
    if (!fs::exists(e.path)) {
      throw DataError("missing checkpoint file " + e.path.string() + " for step " +
                      std::to_string(e.step));
    }
  }
  return m;
}

void write_manifest(const CheckpointManifest& manifest, const fs::path& path) {
  ordered_json j;
  j["model_config"] = config_json(manifest.model_config);
  j["checkpoints"] = ordered_json::array();
  for (const auto& e : manifest.checkpoints) {
    j["checkpoints"].push_back({{"step", e.step}, {"path", e.path.generic_string()}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace compgraph
