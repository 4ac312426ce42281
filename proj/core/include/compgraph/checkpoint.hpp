#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "compgraph/model.hpp"

namespace compgraph {

// Container layout, all integers little-endian:
//   "CGT1" | u64 header_len | header JSON (UTF-8) | payload
// The header maps each canonical tensor name to {dtype:"f32", shape, offset,
// byte_len} (offsets relative to the payload start) and carries a
// "metadata" object with the model config fields and the training step.
inline constexpr std::string_view kContainerMagic = "CGT1";

void save_checkpoint(const ModelWeights& weights, const ModelConfig& config, long step,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  ModelWeights weights;
  ModelConfig config;
  long step = 0;
  // Non-fatal findings such as non-finite values.
  std::vector<std::string> warnings;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

struct CheckpointEntry {
  long step = 0;
  std::filesystem::path path;
};

struct CheckpointManifest {
  ModelConfig model_config;
  std::vector<CheckpointEntry> checkpoints;
};

// Relative entry paths are resolved against the manifest's directory.
CheckpointManifest read_manifest(const std::filesystem::path& path);

// Entry paths are written as given.
void write_manifest(const CheckpointManifest& manifest, const std::filesystem::path& path);

// Throws DataError("duplicate step ...") or DataError("unsorted ...").
void check_manifest_steps(const std::vector<CheckpointEntry>& entries);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(std::string_view json);

}  // namespace compgraph
