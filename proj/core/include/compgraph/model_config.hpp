#pragma once

#include <string>
#include <string_view>

namespace compgraph {

enum class BlockStyle {
  kPreLnSequential,   // h += attn(LN1(h)); h += mlp(LN2(h))
  kPostLnSequential,  // h = LN1(h + attn(h)); h = LN2(h + mlp(h))
  kParallelResidual,  // h += attn(LN1(h)) + mlp(LN2(h))
};

enum class PosStyle { kLearnedAbsolute, kRotary };

enum class MlpActivation {
  kGeluTanh,   // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  kGeluExact,  // 0.5 x (1 + erf(x / sqrt(2)))
};

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_head = 16;
  int d_mlp = 256;
  int vocab_size = 128;
  int n_ctx = 64;
  BlockStyle block_style = BlockStyle::kPreLnSequential;
  PosStyle pos_style = PosStyle::kLearnedAbsolute;
  double rotary_base = 10000.0;
  // Leading dimensions of each head that are rotated; 0 means all of d_head.
  int rotary_dim = 0;
  double ln_eps = 1e-5;
  MlpActivation mlp_activation = MlpActivation::kGeluTanh;

  int effective_rotary_dim() const { return rotary_dim == 0 ? d_head : rotary_dim; }
  int num_components() const { return 1 + n_layers * n_heads + n_layers; }

  // Throws UsageError describing the first violated invariant.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

std::string_view to_string(BlockStyle style);
std::string_view to_string(PosStyle style);
std::string_view to_string(MlpActivation act);
BlockStyle parse_block_style(std::string_view text);
PosStyle parse_pos_style(std::string_view text);
MlpActivation parse_mlp_activation(std::string_view text);

}  // namespace compgraph
