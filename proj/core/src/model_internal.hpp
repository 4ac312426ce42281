#pragma once

// Forward-pass kernels shared by the analysis forward and the trainer's
// backward pass.

#include <optional>
#include <span>
#include <vector>

#include "compgraph/model.hpp"

namespace compgraph::detail {

template <class T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct LnCache {
  Matrix<T> xhat;
  ColVector<T> rstd;
};

template <class T>
struct AttnCache {
  Matrix<T> input;
  // Per head, rows are (batch, position); q and k are post-rotary.
  std::vector<Matrix<T>> q, k, v, z;
  std::vector<Matrix<T>> probs;  // [batch * seq, seq], zero above the diagonal
};

template <class T>
struct MlpCache {
  Matrix<T> input, pre, act;
};

template <class T>
struct LayerCache {
  LnCache<T> ln1, ln2;
  AttnCache<T> attn;
  MlpCache<T> mlp;
};

template <class T>
struct ForwardCache {
  int batch = 0;
  int seq = 0;
  std::vector<int> tokens;
  std::vector<int> positions;
  std::vector<LayerCache<T>> layers;
  LnCache<T> ln_f;
  Matrix<T> final_normed;
};

template <class T>
struct ForwardOptions {
  std::optional<ComponentId> ablate;
  // When set, resized to num_components and filled with [batch * seq, d_model] tensors.
  std::vector<Matrix<T>>* contributions = nullptr;
  Matrix<T>* final_residual = nullptr;
  ForwardCache<T>* cache = nullptr;
};

// Batched forward over `batch` sequences of length `seq` stored row-major in
// `tokens`. Inputs are assumed validated. Returns logits [batch * seq, vocab].
template <class T>
Matrix<T> run_forward(const BasicWeights<T>& w, const ModelConfig& c, std::span<const int> tokens,
                      int batch, int seq, const ForwardOptions<T>& opts);

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const RowVector<T>& scale, const RowVector<T>& shift,
                     double eps, LnCache<T>* cache);

template <class T>
T gelu(T x, MlpActivation act);

template <class T>
T gelu_grad(T x, MlpActivation act);

// Throws UsageError/DataError for out-of-range tokens or over-long input.
void check_tokens(std::span<const int> tokens, int seq, const ModelConfig& c);

}  // namespace compgraph::detail
