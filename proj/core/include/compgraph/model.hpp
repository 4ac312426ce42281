#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "compgraph/components.hpp"
#include "compgraph/model_config.hpp"

namespace compgraph {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

// Per-head projections are stacked along rows: W_Q holds n_heads blocks of
// [d_model x d_head], so its row-major storage is [n_heads, d_model, d_head].
template <class T>
struct LayerWeights {
  RowVector<T> ln1_w, ln1_b;
  Matrix<T> W_Q, W_K, W_V;  // [n_heads * d_model, d_head]
  Matrix<T> b_Q, b_K, b_V;  // [n_heads, d_head]
  Matrix<T> W_O;            // [n_heads * d_head, d_model]
  RowVector<T> b_O;
  RowVector<T> ln2_w, ln2_b;
  Matrix<T> W_in;  // [d_model, d_mlp]
  RowVector<T> b_in;
  Matrix<T> W_out;  // [d_mlp, d_model]
  RowVector<T> b_out;
};

template <class T>
struct BasicWeights {
  Matrix<T> W_E;  // [vocab_size, d_model]
  Matrix<T> W_P;  // [n_ctx, d_model]; empty for rotary models
  std::vector<LayerWeights<T>> blocks;
  RowVector<T> ln_f_w, ln_f_b;
  Matrix<T> W_U;  // [d_model, vocab_size]
};

using ModelWeights = BasicWeights<float>;

// One named parameter tensor with its canonical shape and flat row-major data.
template <class T>
struct ParamView {
  std::string name;
  std::vector<std::int64_t> shape;
  std::span<T> values;
};

// Calls fn(name, shape, T* data, size) for every parameter tensor in
// canonical checkpoint order.
template <class W, class Fn>
void visit_parameters(W& w, const ModelConfig& c, Fn&& fn) {
  using I = std::int64_t;
  auto call = [&](const std::string& name, std::vector<I> shape, auto& m) {
    fn(name, std::move(shape), m.data(), static_cast<size_t>(m.size()));
  };
  const I d = c.d_model, h = c.n_heads, dh = c.d_head;
  call("embed.W_E", {c.vocab_size, d}, w.W_E);
  if (c.pos_style == PosStyle::kLearnedAbsolute) call("pos.W_P", {c.n_ctx, d}, w.W_P);
  for (int l = 0; l < c.n_layers; ++l) {
    auto& b = w.blocks[static_cast<size_t>(l)];
    const std::string p = "blocks." + std::to_string(l) + ".";
    call(p + "ln1.w", {d}, b.ln1_w);
    call(p + "ln1.b", {d}, b.ln1_b);
    call(p + "attn.W_Q", {h, d, dh}, b.W_Q);
    call(p + "attn.W_K", {h, d, dh}, b.W_K);
    call(p + "attn.W_V", {h, d, dh}, b.W_V);
    call(p + "attn.b_Q", {h, dh}, b.b_Q);
    call(p + "attn.b_K", {h, dh}, b.b_K);
    call(p + "attn.b_V", {h, dh}, b.b_V);
    call(p + "attn.W_O", {h, dh, d}, b.W_O);
    call(p + "attn.b_O", {d}, b.b_O);
    call(p + "ln2.w", {d}, b.ln2_w);
    call(p + "ln2.b", {d}, b.ln2_b);
    call(p + "mlp.W_in", {d, c.d_mlp}, b.W_in);
    call(p + "mlp.b_in", {c.d_mlp}, b.b_in);
    call(p + "mlp.W_out", {c.d_mlp, d}, b.W_out);
    call(p + "mlp.b_out", {d}, b.b_out);
  }
  call("ln_f.w", {d}, w.ln_f_w);
  call("ln_f.b", {d}, w.ln_f_b);
  call("unembed.W_U", {d, c.vocab_size}, w.W_U);
}

template <class T>
std::vector<ParamView<T>> parameters(BasicWeights<T>& w, const ModelConfig& c) {
  std::vector<ParamView<T>> out;
  visit_parameters(w, c, [&](const std::string& name, std::vector<std::int64_t> shape, T* data,
                             size_t n) {
    out.push_back({name, std::move(shape), std::span<T>(data, n)});
  });
  return out;
}

template <class T>
std::vector<ParamView<const T>> parameters(const BasicWeights<T>& w, const ModelConfig& c) {
  std::vector<ParamView<const T>> out;
  visit_parameters(w, c, [&](const std::string& name, std::vector<std::int64_t> shape,
                             const T* data, size_t n) {
    out.push_back({name, std::move(shape), std::span<const T>(data, n)});
  });
  return out;
}

// Every tensor zero, LN scales included.
template <class T>
BasicWeights<T> zero_weights(const ModelConfig& config);

template <class To, class From>
BasicWeights<To> cast_weights(const BasicWeights<From>& w) {
  BasicWeights<To> out;
  out.W_E = w.W_E.template cast<To>();
  out.W_P = w.W_P.template cast<To>();
  out.blocks.resize(w.blocks.size());
  for (size_t l = 0; l < w.blocks.size(); ++l) {
    const auto& s = w.blocks[l];
    auto& d = out.blocks[l];
    d.ln1_w = s.ln1_w.template cast<To>();
    d.ln1_b = s.ln1_b.template cast<To>();
    d.W_Q = s.W_Q.template cast<To>();
    d.W_K = s.W_K.template cast<To>();
    d.W_V = s.W_V.template cast<To>();
    d.b_Q = s.b_Q.template cast<To>();
    d.b_K = s.b_K.template cast<To>();
    d.b_V = s.b_V.template cast<To>();
    d.W_O = s.W_O.template cast<To>();
    d.b_O = s.b_O.template cast<To>();
    d.ln2_w = s.ln2_w.template cast<To>();
    d.ln2_b = s.ln2_b.template cast<To>();
    d.W_in = s.W_in.template cast<To>();
    d.b_in = s.b_in.template cast<To>();
    d.W_out = s.W_out.template cast<To>();
    d.b_out = s.b_out.template cast<To>();
  }
  out.ln_f_w = w.ln_f_w.template cast<To>();
  out.ln_f_b = w.ln_f_b.template cast<To>();
  out.W_U = w.W_U.template cast<To>();
  return out;
}

// Throws DataError when any tensor shape disagrees with `config`.
template <class T>
void check_shapes(const BasicWeights<T>& w, const ModelConfig& config);

template <class T>
struct BasicForwardRecord {
  // Residual-stream contribution of every component, [seq_len, d_model],
  // indexed by ComponentId::index().
  std::vector<Matrix<T>> contributions;
  // Residual stream entering the final layer norm.
  Matrix<T> final_residual;
  Matrix<T> logits;  // [seq_len, vocab_size]
  std::optional<ComponentId> ablated;

  const Matrix<T>& contribution(const ComponentId& id, const ModelConfig& c) const {
    return contributions[static_cast<size_t>(id.index(c))];
  }
};

using ForwardRecord = BasicForwardRecord<float>;

// Single-sequence forward pass capturing each component's residual
// contribution. When `ablate` is set, that component's contribution is
// replaced by zeros before it reaches the residual stream. Each head's
// contribution carries b_O / n_heads so the components sum to the stream.
template <class T>
BasicForwardRecord<T> forward(const BasicWeights<T>& weights, const ModelConfig& config,
                              std::span<const int> tokens,
                              std::optional<ComponentId> ablate = std::nullopt);

// Rotates pairs (i, i + rot/2) of the first `rotary_dim` columns (all columns
// when 0) of row r by positions[r] * base^(-2i/rot).
template <class T>
void apply_rotary_inplace(Matrix<T>& x, std::span<const int> positions, double base,
                          int rotary_dim = 0, bool inverse = false);

template <class T>
Matrix<T> apply_rotary(const Matrix<T>& x, std::span<const int> positions, double base) {
  Matrix<T> out = x;
  apply_rotary_inplace(out, positions, base);
  return out;
}

// logits[position][target]; position defaults to the last row.
template <class T>
double correct_token_logit(const BasicForwardRecord<T>& record, int target,
                           std::optional<int> position = std::nullopt);

}  // namespace compgraph
