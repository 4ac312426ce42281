#include "compgraph/model_config.hpp"

#include <cmath>
#include <string>

#include "compgraph/error.hpp"

namespace compgraph {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw UsageError("invalid model config: " + msg); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (n_heads < 1) fail("n_heads must be >= 1");
  if (d_model < 1) fail("d_model must be >= 1");
  if (d_head < 1) fail("d_head must be >= 1");
  if (d_mlp < 1) fail("d_mlp must be >= 1");
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (n_ctx < 1) fail("n_ctx must be >= 1");
  if (!(ln_eps > 0.0) || !std::isfinite(ln_eps)) fail("ln_eps must be > 0");
  if (pos_style == PosStyle::kRotary) {
    if (!(rotary_base > 0.0)) fail("rotary_base must be > 0");
    int rd = effective_rotary_dim();
    if (rd < 0 || rd > d_head) fail("rotary_dim must lie in [0, d_head]");
    if (rd % 2 != 0) fail("rotary dimension must be even");
  }
}

std::string_view to_string(BlockStyle style) {
  switch (style) {
    case BlockStyle::kPreLnSequential: return "preln_sequential";
    case BlockStyle::kPostLnSequential: return "postln_sequential";
    case BlockStyle::kParallelResidual: return "parallel_residual";
  }
  return "?";
}

std::string_view to_string(PosStyle style) {
  return style == PosStyle::kRotary ? "rotary" : "learned_absolute";
}

std::string_view to_string(MlpActivation act) {
  return act == MlpActivation::kGeluExact ? "gelu_exact" : "gelu_tanh";
}

BlockStyle parse_block_style(std::string_view text) {
  if (text == "preln_sequential") return BlockStyle::kPreLnSequential;
  if (text == "postln_sequential") return BlockStyle::kPostLnSequential;
  if (text == "parallel_residual") return BlockStyle::kParallelResidual;
  throw DataError("unknown block_style '" + std::string(text) + "'");
}

PosStyle parse_pos_style(std::string_view text) {
  if (text == "learned_absolute") return PosStyle::kLearnedAbsolute;
  if (text == "rotary") return PosStyle::kRotary;
  throw DataError("unknown pos_style '" + std::string(text) + "'");
}

MlpActivation parse_mlp_activation(std::string_view text) {
  if (text == "gelu_tanh") return MlpActivation::kGeluTanh;
  if (text == "gelu_exact") return MlpActivation::kGeluExact;
  throw DataError("unknown mlp_activation '" + std::string(text) + "'");
}

}  // namespace compgraph
