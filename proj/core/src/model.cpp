#include "compgraph/model.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "compgraph/error.hpp"
#include "model_internal.hpp"

namespace compgraph {
namespace detail {

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const RowVector<T>& scale, const RowVector<T>& shift,
                     double eps, LnCache<T>* cache) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  Matrix<T> xhat(n, d);
  ColVector<T> rstd(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).matrix();
    const T var = centered.squaredNorm() / static_cast<T>(d);
    rstd(r) = T(1) / std::sqrt(var + static_cast<T>(eps));
    xhat.row(r) = centered * rstd(r);
  }
  Matrix<T> y = (xhat.array().rowwise() * scale.array()).rowwise() + shift.array();
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <class T>
T gelu(T x, MlpActivation act) {
  if (act == MlpActivation::kGeluExact) {
    return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  }
  constexpr T k = static_cast<T>(0.7978845608028654);  // sqrt(2 / pi)
  return T(0.5) * x * (T(1) + std::tanh(k * (x + T(0.044715) * x * x * x)));
}

template <class T>
T gelu_grad(T x, MlpActivation act) {
  if (act == MlpActivation::kGeluExact) {
    const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<T> /
                  std::numbers::sqrt2_v<T>;
    return cdf + x * pdf;
  }
  constexpr T k = static_cast<T>(0.7978845608028654);
  const T inner = k * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(inner);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * k * (T(1) + T(3 * 0.044715) * x * x);
}

void check_tokens(std::span<const int> tokens, int seq, const ModelConfig& c) {
  if (seq < 1) throw UsageError("empty token sequence");
  if (seq > c.n_ctx) {
    throw UsageError("sequence length " + std::to_string(seq) + " exceeds n_ctx " +
                     std::to_string(c.n_ctx));
  }
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= c.vocab_size) {
      throw UsageError("token id " + std::to_string(tokens[i]) + " at index " +
                       std::to_string(i) + " out of range for vocab_size " +
                       std::to_string(c.vocab_size));
    }
  }
}

namespace {

template <class T>
struct Runner {
  const BasicWeights<T>& w;
  const ModelConfig& c;
  int batch;
  int seq;
  const ForwardOptions<T>& opts;
  const std::vector<int>& positions;

  void emit(const ComponentId& id, Matrix<T>& out) {
    if (opts.ablate && *opts.ablate == id) out.setZero();
    if (opts.contributions != nullptr) {
      (*opts.contributions)[static_cast<size_t>(id.index(c))] = out;
    }
  }

  Matrix<T> attention(const Matrix<T>& x, int layer, AttnCache<T>* cache) {
    const auto& lw = w.blocks[static_cast<size_t>(layer)];
    const int d = c.d_model;
    const int dh = c.d_head;
    const Eigen::Index n = x.rows();
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const RowVector<T> bias_share = lw.b_O / static_cast<T>(c.n_heads);
    Matrix<T> total = Matrix<T>::Zero(n, d);
    if (cache != nullptr) {
      cache->input = x;
      for (auto* v : {&cache->q, &cache->k, &cache->v, &cache->z, &cache->probs}) {
        v->assign(static_cast<size_t>(c.n_heads), Matrix<T>());
      }
    }
    for (int h = 0; h < c.n_heads; ++h) {
      Matrix<T> q = x * lw.W_Q.middleRows(h * d, d);
      Matrix<T> k = x * lw.W_K.middleRows(h * d, d);
      Matrix<T> v = x * lw.W_V.middleRows(h * d, d);
      q.rowwise() += lw.b_Q.row(h);
      k.rowwise() += lw.b_K.row(h);
      v.rowwise() += lw.b_V.row(h);
      if (c.pos_style == PosStyle::kRotary) {
        apply_rotary_inplace(q, positions, c.rotary_base, c.effective_rotary_dim());
        apply_rotary_inplace(k, positions, c.rotary_base, c.effective_rotary_dim());
      }
      Matrix<T> z(n, dh);
      Matrix<T> probs = Matrix<T>::Zero(n, seq);
      for (int b = 0; b < batch; ++b) {
        const Eigen::Index off = static_cast<Eigen::Index>(b) * seq;
        Matrix<T> scores = (q.middleRows(off, seq) * k.middleRows(off, seq).transpose()) * scale;
        for (int i = 0; i < seq; ++i) {
          // Causal mask: keys j > i receive -inf, i.e. zero probability.
          const T mx = scores.row(i).head(i + 1).maxCoeff();
          T sum = 0;
          for (int j = 0; j <= i; ++j) {
            const T e = std::exp(scores(i, j) - mx);
            probs(off + i, j) = e;
            sum += e;
          }
          probs.row(off + i).head(i + 1) /= sum;
        }
        z.middleRows(off, seq).noalias() = probs.middleRows(off, seq) * v.middleRows(off, seq);
      }
      Matrix<T> out = z * lw.W_O.middleRows(h * dh, dh);
      out.rowwise() += bias_share;
      emit(ComponentId::attn_head(layer, h), out);
      total += out;
      if (cache != nullptr) {
        const auto hs = static_cast<size_t>(h);
        cache->q[hs] = std::move(q);
        cache->k[hs] = std::move(k);
        cache->v[hs] = std::move(v);
        cache->z[hs] = std::move(z);
        cache->probs[hs] = std::move(probs);
      }
    }
    return total;
  }

  Matrix<T> mlp(const Matrix<T>& x, int layer, MlpCache<T>* cache) {
    const auto& lw = w.blocks[static_cast<size_t>(layer)];
    Matrix<T> pre = x * lw.W_in;
    pre.rowwise() += lw.b_in;
    const MlpActivation act_kind = c.mlp_activation;
    Matrix<T> act = pre.unaryExpr([act_kind](T v) { return gelu(v, act_kind); });
    Matrix<T> out = act * lw.W_out;
    out.rowwise() += lw.b_out;
    emit(ComponentId::mlp(layer), out);
    if (cache != nullptr) {
      cache->input = x;
      cache->pre = std::move(pre);
      cache->act = std::move(act);
    }
    return out;
  }
};

}  // namespace

template <class T>
Matrix<T> run_forward(const BasicWeights<T>& w, const ModelConfig& c, std::span<const int> tokens,
                      int batch, int seq, const ForwardOptions<T>& opts) {
  const Eigen::Index n = static_cast<Eigen::Index>(batch) * seq;
  std::vector<int> positions(static_cast<size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) positions[static_cast<size_t>(r)] = static_cast<int>(r % seq);

  if (opts.contributions != nullptr) {
    opts.contributions->assign(static_cast<size_t>(c.num_components()), Matrix<T>());
  }
  ForwardCache<T>* cache = opts.cache;
  if (cache != nullptr) {
    cache->batch = batch;
    cache->seq = seq;
    cache->tokens.assign(tokens.begin(), tokens.end());
    cache->positions = positions;
    cache->layers.assign(static_cast<size_t>(c.n_layers), LayerCache<T>());
  }

  Runner<T> run{w, c, batch, seq, opts, positions};
  Matrix<T> resid(n, c.d_model);
  for (Eigen::Index r = 0; r < n; ++r) {
    resid.row(r) = w.W_E.row(tokens[static_cast<size_t>(r)]);
    if (c.pos_style == PosStyle::kLearnedAbsolute) resid.row(r) += w.W_P.row(r % seq);
  }
  run.emit(ComponentId::emb(), resid);

  const double eps = c.ln_eps;
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& lw = w.blocks[static_cast<size_t>(l)];
    LayerCache<T>* lc = cache != nullptr ? &cache->layers[static_cast<size_t>(l)] : nullptr;
    LnCache<T>* ln1 = lc != nullptr ? &lc->ln1 : nullptr;
    LnCache<T>* ln2 = lc != nullptr ? &lc->ln2 : nullptr;
    AttnCache<T>* ac = lc != nullptr ? &lc->attn : nullptr;
    MlpCache<T>* mc = lc != nullptr ? &lc->mlp : nullptr;
    switch (c.block_style) {
      case BlockStyle::kPreLnSequential: {
        resid += run.attention(layer_norm(resid, lw.ln1_w, lw.ln1_b, eps, ln1), l, ac);
        resid += run.mlp(layer_norm(resid, lw.ln2_w, lw.ln2_b, eps, ln2), l, mc);
        break;
      }
      case BlockStyle::kPostLnSequential: {
        Matrix<T> a = run.attention(resid, l, ac);
        resid = layer_norm<T>(resid + a, lw.ln1_w, lw.ln1_b, eps, ln1);
        Matrix<T> m = run.mlp(resid, l, mc);
        resid = layer_norm<T>(resid + m, lw.ln2_w, lw.ln2_b, eps, ln2);
        break;
      }
      case BlockStyle::kParallelResidual: {
        Matrix<T> a = run.attention(layer_norm(resid, lw.ln1_w, lw.ln1_b, eps, ln1), l, ac);
        Matrix<T> m = run.mlp(layer_norm(resid, lw.ln2_w, lw.ln2_b, eps, ln2), l, mc);
        resid += a;
        resid += m;
        break;
      }
    }
  }
  if (opts.final_residual != nullptr) *opts.final_residual = resid;
  Matrix<T> normed = layer_norm(resid, w.ln_f_w, w.ln_f_b, eps, cache ? &cache->ln_f : nullptr);
  Matrix<T> logits = normed * w.W_U;
  if (cache != nullptr) cache->final_normed = std::move(normed);
  return logits;
}

template Matrix<float> run_forward(const BasicWeights<float>&, const ModelConfig&,
                                   std::span<const int>, int, int, const ForwardOptions<float>&);
template Matrix<double> run_forward(const BasicWeights<double>&, const ModelConfig&,
                                    std::span<const int>, int, int,
                                    const ForwardOptions<double>&);
template Matrix<float> layer_norm(const Matrix<float>&, const RowVector<float>&,
                                  const RowVector<float>&, double, LnCache<float>*);
template Matrix<double> layer_norm(const Matrix<double>&, const RowVector<double>&,
                                   const RowVector<double>&, double, LnCache<double>*);
template float gelu(float, MlpActivation);
template double gelu(double, MlpActivation);
template float gelu_grad(float, MlpActivation);
template double gelu_grad(double, MlpActivation);

}  // namespace detail

template <class T>
BasicWeights<T> zero_weights(const ModelConfig& c) {
  const int d = c.d_model;
  const int h = c.n_heads;
  const int dh = c.d_head;
  BasicWeights<T> w;
  w.W_E = Matrix<T>::Zero(c.vocab_size, d);
  if (c.pos_style == PosStyle::kLearnedAbsolute) w.W_P = Matrix<T>::Zero(c.n_ctx, d);
  w.blocks.resize(static_cast<size_t>(c.n_layers));
  for (auto& b : w.blocks) {
    b.ln1_w = RowVector<T>::Zero(d);
    b.ln1_b = RowVector<T>::Zero(d);
    b.W_Q = Matrix<T>::Zero(h * d, dh);
    b.W_K = Matrix<T>::Zero(h * d, dh);
    b.W_V = Matrix<T>::Zero(h * d, dh);
    b.b_Q = Matrix<T>::Zero(h, dh);
    b.b_K = Matrix<T>::Zero(h, dh);
    b.b_V = Matrix<T>::Zero(h, dh);
    b.W_O = Matrix<T>::Zero(h * dh, d);
    b.b_O = RowVector<T>::Zero(d);
    b.ln2_w = RowVector<T>::Zero(d);
    b.ln2_b = RowVector<T>::Zero(d);
    b.W_in = Matrix<T>::Zero(d, c.d_mlp);
    b.b_in = RowVector<T>::Zero(c.d_mlp);
    b.W_out = Matrix<T>::Zero(c.d_mlp, d);
    b.b_out = RowVector<T>::Zero(d);
  }
  w.ln_f_w = RowVector<T>::Zero(d);
  w.ln_f_b = RowVector<T>::Zero(d);
  w.W_U = Matrix<T>::Zero(d, c.vocab_size);
  return w;
}

template <class T>
void check_shapes(const BasicWeights<T>& w, const ModelConfig& c) {
  auto expect = [](const std::string& name, Eigen::Index rows, Eigen::Index cols,
                   Eigen::Index want_rows, Eigen::Index want_cols) {
    if (rows != want_rows || cols != want_cols) {
      throw DataError("shape mismatch for " + name + ": got [" + std::to_string(rows) + " x " +
                      std::to_string(cols) + "], config requires [" + std::to_string(want_rows) +
                      " x " + std::to_string(want_cols) + "]");
    }
  };
  auto mat = [&](const std::string& name, const auto& m, Eigen::Index r, Eigen::Index cc) {
    expect(name, m.rows(), m.cols(), r, cc);
  };
  const int d = c.d_model;
  const int h = c.n_heads;
  const int dh = c.d_head;
  mat("embed.W_E", w.W_E, c.vocab_size, d);
  if (c.pos_style == PosStyle::kLearnedAbsolute) mat("pos.W_P", w.W_P, c.n_ctx, d);
  if (w.blocks.size() != static_cast<size_t>(c.n_layers)) {
    throw DataError("weights have " + std::to_string(w.blocks.size()) + " blocks, config has " +
                    std::to_string(c.n_layers) + " layers");
  }
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& b = w.blocks[static_cast<size_t>(l)];
    const std::string p = "blocks." + std::to_string(l) + ".";
    mat(p + "ln1.w", b.ln1_w, 1, d);
    mat(p + "ln1.b", b.ln1_b, 1, d);
    mat(p + "attn.W_Q", b.W_Q, h * d, dh);
    mat(p + "attn.W_K", b.W_K, h * d, dh);
    mat(p + "attn.W_V", b.W_V, h * d, dh);
    mat(p + "attn.b_Q", b.b_Q, h, dh);
    mat(p + "attn.b_K", b.b_K, h, dh);
    mat(p + "attn.b_V", b.b_V, h, dh);
    mat(p + "attn.W_O", b.W_O, h * dh, d);
    mat(p + "attn.b_O", b.b_O, 1, d);
    mat(p + "ln2.w", b.ln2_w, 1, d);
    mat(p + "ln2.b", b.ln2_b, 1, d);
    mat(p + "mlp.W_in", b.W_in, d, c.d_mlp);
    mat(p + "mlp.b_in", b.b_in, 1, c.d_mlp);
    mat(p + "mlp.W_out", b.W_out, c.d_mlp, d);
    mat(p + "mlp.b_out", b.b_out, 1, d);
  }
  mat("ln_f.w", w.ln_f_w, 1, d);
  mat("ln_f.b", w.ln_f_b, 1, d);
  mat("unembed.W_U", w.W_U, d, c.vocab_size);
}

template <class T>
BasicForwardRecord<T> forward(const BasicWeights<T>& weights, const ModelConfig& config,
                              std::span<const int> tokens, std::optional<ComponentId> ablate) {
  config.validate();
  check_shapes(weights, config);
  detail::check_tokens(tokens, static_cast<int>(tokens.size()), config);
  if (ablate) check_component(*ablate, config);

  BasicForwardRecord<T> record;
  record.ablated = ablate;
  detail::ForwardOptions<T> opts;
  opts.ablate = ablate;
  opts.contributions = &record.contributions;
  opts.final_residual = &record.final_residual;
  record.logits = detail::run_forward(weights, config, tokens, 1, static_cast<int>(tokens.size()),
                                      opts);
  return record;
}

template <class T>
void apply_rotary_inplace(Matrix<T>& x, std::span<const int> positions, double base,
                          int rotary_dim, bool inverse) {
  const int rot = rotary_dim == 0 ? static_cast<int>(x.cols()) : rotary_dim;
  if (rot % 2 != 0) {
    throw UsageError("rotary embedding needs an even head dimension, got " + std::to_string(rot));
  }
  if (rot > x.cols()) throw UsageError("rotary_dim exceeds head dimension");
  if (positions.size() != static_cast<size_t>(x.rows())) {
    throw UsageError("rotary: one position per row required");
  }
  const int half = rot / 2;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double pos = positions[static_cast<size_t>(r)];
    if (pos == 0.0) continue;
    for (int i = 0; i < half; ++i) {
      double angle = pos * std::pow(base, -2.0 * i / rot);
      if (inverse) angle = -angle;
      const T cs = static_cast<T>(std::cos(angle));
      const T sn = static_cast<T>(std::sin(angle));
      const T a = x(r, i);
      const T b = x(r, i + half);
      x(r, i) = a * cs - b * sn;
      x(r, i + half) = a * sn + b * cs;
    }
  }
}

template <class T>
double correct_token_logit(const BasicForwardRecord<T>& record, int target,
                           std::optional<int> position) {
  const auto rows = record.logits.rows();
  const int pos = position.value_or(static_cast<int>(rows) - 1);
  if (target < 0 || target >= record.logits.cols()) {
    throw UsageError("target token " + std::to_string(target) + " out of range");
  }
  if (pos < 0 || pos >= rows) {
    throw UsageError("position " + std::to_string(pos) + " out of range");
  }
  return static_cast<double>(record.logits(pos, target));
}

template BasicWeights<float> zero_weights(const ModelConfig&);
template BasicWeights<double> zero_weights(const ModelConfig&);
template void check_shapes(const BasicWeights<float>&, const ModelConfig&);
template void check_shapes(const BasicWeights<double>&, const ModelConfig&);
template BasicForwardRecord<float> forward(const BasicWeights<float>&, const ModelConfig&,
                                           std::span<const int>, std::optional<ComponentId>);
template BasicForwardRecord<double> forward(const BasicWeights<double>&, const ModelConfig&,
                                            std::span<const int>, std::optional<ComponentId>);
template void apply_rotary_inplace(Matrix<float>&, std::span<const int>, double, int, bool);
template void apply_rotary_inplace(Matrix<double>&, std::span<const int>, double, int, bool);
template double correct_token_logit(const BasicForwardRecord<float>&, int, std::optional<int>);
template double correct_token_logit(const BasicForwardRecord<double>&, int, std::optional<int>);

}  // namespace compgraph
