#include "compgraph/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "compgraph/error.hpp"
#include "model_internal.hpp"

namespace compgraph {

using detail::AttnCache;
using detail::ForwardCache;
using detail::LnCache;
using detail::MlpCache;

InductionBatch make_induction_batch(std::mt19937_64& rng, int batch_size, int seq_len,
                                    int vocab_size) {
  if (seq_len < 2 || seq_len % 2 != 0) throw UsageError("seq_len must be even and >= 2");
  if (vocab_size < 2) throw UsageError("vocab_size must be >= 2");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  InductionBatch b;
  b.batch = batch_size;
  b.seq = seq_len;
  b.tokens.resize(static_cast<size_t>(batch_size) * seq_len);
  b.loss_mask.assign(b.tokens.size(), 0);
  std::uniform_int_distribution<int> dist(0, vocab_size - 1);
  const int half = seq_len / 2;
  for (int r = 0; r < batch_size; ++r) {
    int* row = b.tokens.data() + static_cast<size_t>(r) * seq_len;
    for (int t = 0; t < half; ++t) row[t] = dist(rng);
    std::copy(row, row + half, row + half);
    std::uint8_t* mask = b.loss_mask.data() + static_cast<size_t>(r) * seq_len;
    std::fill(mask + half - 1, mask + seq_len - 1, std::uint8_t{1});
  }
  return b;
}

namespace {

template <class T>
Matrix<T> ln_backward(const Matrix<T>& dy, const LnCache<T>& cache, const RowVector<T>& scale,
                      RowVector<T>& dscale, RowVector<T>& dshift) {
  dscale += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dshift += dy.colwise().sum();
  Matrix<T> dxhat = dy.array().rowwise() * scale.array();
  Matrix<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T mean_d = dxhat.row(r).mean();
    const T mean_dx = (dxhat.row(r).array() * cache.xhat.row(r).array()).mean();
    dx.row(r) = (cache.rstd(r) *
                 (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx))
                    .matrix();
  }
  return dx;
}

template <class T>
Matrix<T> attn_backward(const Matrix<T>& d_out, const AttnCache<T>& cache,
                        const LayerWeights<T>& lw, LayerWeights<T>& g, const ModelConfig& c,
                        const ForwardCache<T>& fc) {
  const int d = c.d_model;
  const int dh = c.d_head;
  const int seq = fc.seq;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Matrix<T>& x = cache.input;
  Matrix<T> dx = Matrix<T>::Zero(x.rows(), d);
  // Every head adds b_O / n_heads, so b_O sees the full upstream gradient.
  g.b_O += d_out.colwise().sum();
  for (int h = 0; h < c.n_heads; ++h) {
    const auto hs = static_cast<size_t>(h);
    const Matrix<T>& q = cache.q[hs];
    const Matrix<T>& k = cache.k[hs];
    const Matrix<T>& v = cache.v[hs];
    const Matrix<T>& probs = cache.probs[hs];
    g.W_O.middleRows(h * dh, dh).noalias() += cache.z[hs].transpose() * d_out;
    Matrix<T> dz = d_out * lw.W_O.middleRows(h * dh, dh).transpose();
    Matrix<T> dq(x.rows(), dh);
    Matrix<T> dk(x.rows(), dh);
    Matrix<T> dv(x.rows(), dh);
    for (int b = 0; b < fc.batch; ++b) {
      const Eigen::Index off = static_cast<Eigen::Index>(b) * seq;
      const auto p = probs.middleRows(off, seq);
      const auto dz_b = dz.middleRows(off, seq);
      Matrix<T> dp = dz_b * v.middleRows(off, seq).transpose();
      dv.middleRows(off, seq).noalias() = p.transpose() * dz_b;
      // Softmax Jacobian; masked entries have p = 0 and drop out.
      const auto row_dot = (dp.array() * p.array()).rowwise().sum();
      Matrix<T> ds = (p.array() * (dp.array().colwise() - row_dot)).matrix() * scale;
      dq.middleRows(off, seq).noalias() = ds * k.middleRows(off, seq);
      dk.middleRows(off, seq).noalias() = ds.transpose() * q.middleRows(off, seq);
    }
    if (c.pos_style == PosStyle::kRotary) {
      apply_rotary_inplace(dq, fc.positions, c.rotary_base, c.effective_rotary_dim(), true);
      apply_rotary_inplace(dk, fc.positions, c.rotary_base, c.effective_rotary_dim(), true);
    }
    g.W_Q.middleRows(h * d, d).noalias() += x.transpose() * dq;
    g.W_K.middleRows(h * d, d).noalias() += x.transpose() * dk;
    g.W_V.middleRows(h * d, d).noalias() += x.transpose() * dv;
    g.b_Q.row(h) += dq.colwise().sum();
    g.b_K.row(h) += dk.colwise().sum();
    g.b_V.row(h) += dv.colwise().sum();
    dx.noalias() += dq * lw.W_Q.middleRows(h * d, d).transpose();
    dx.noalias() += dk * lw.W_K.middleRows(h * d, d).transpose();
    dx.noalias() += dv * lw.W_V.middleRows(h * d, d).transpose();
  }
  return dx;
}

template <class T>
Matrix<T> mlp_backward(const Matrix<T>& d_out, const MlpCache<T>& cache, const LayerWeights<T>& lw,
                       LayerWeights<T>& g, MlpActivation act) {
  g.W_out.noalias() += cache.act.transpose() * d_out;
  g.b_out += d_out.colwise().sum();
  Matrix<T> dpre = d_out * lw.W_out.transpose();
  dpre.array() *= cache.pre.unaryExpr([act](T v) { return detail::gelu_grad(v, act); }).array();
  g.W_in.noalias() += cache.input.transpose() * dpre;
  g.b_in += dpre.colwise().sum();
  return dpre * lw.W_in.transpose();
}

template <class T>
void backward(const BasicWeights<T>& w, const ModelConfig& c, const ForwardCache<T>& fc,
              const Matrix<T>& dlogits, BasicWeights<T>& g) {
  g.W_U.noalias() = fc.final_normed.transpose() * dlogits;
  Matrix<T> dresid =
      ln_backward<T>(dlogits * w.W_U.transpose(), fc.ln_f, w.ln_f_w, g.ln_f_w, g.ln_f_b);
  const MlpActivation act = c.mlp_activation;
  for (int l = c.n_layers - 1; l >= 0; --l) {
    const auto ls = static_cast<size_t>(l);
    const auto& lw = w.blocks[ls];
    auto& gl = g.blocks[ls];
    const auto& lc = fc.layers[ls];
    switch (c.block_style) {
      case BlockStyle::kPreLnSequential: {
        Matrix<T> dx2 = mlp_backward(dresid, lc.mlp, lw, gl, act);
        dresid += ln_backward(dx2, lc.ln2, lw.ln2_w, gl.ln2_w, gl.ln2_b);
        Matrix<T> dx1 = attn_backward(dresid, lc.attn, lw, gl, c, fc);
        dresid += ln_backward(dx1, lc.ln1, lw.ln1_w, gl.ln1_w, gl.ln1_b);
        break;
      }
      case BlockStyle::kPostLnSequential: {
        Matrix<T> du = ln_backward(dresid, lc.ln2, lw.ln2_w, gl.ln2_w, gl.ln2_b);
        Matrix<T> dmid = du + mlp_backward(du, lc.mlp, lw, gl, act);
        Matrix<T> dv = ln_backward(dmid, lc.ln1, lw.ln1_w, gl.ln1_w, gl.ln1_b);
        dresid = dv + attn_backward(dv, lc.attn, lw, gl, c, fc);
        break;
      }
      case BlockStyle::kParallelResidual: {
        Matrix<T> dx1 = attn_backward(dresid, lc.attn, lw, gl, c, fc);
        Matrix<T> dx2 = mlp_backward(dresid, lc.mlp, lw, gl, act);
        dresid += ln_backward(dx1, lc.ln1, lw.ln1_w, gl.ln1_w, gl.ln1_b);
        dresid += ln_backward(dx2, lc.ln2, lw.ln2_w, gl.ln2_w, gl.ln2_b);
        break;
      }
    }
  }
  const bool learned = c.pos_style == PosStyle::kLearnedAbsolute;
  for (Eigen::Index r = 0; r < dresid.rows(); ++r) {
    g.W_E.row(fc.tokens[static_cast<size_t>(r)]) += dresid.row(r);
    if (learned) g.W_P.row(r % fc.seq) += dresid.row(r);
  }
}

}  // namespace

template <class T>
LossAndGrads<T> loss_and_grads(const BasicWeights<T>& weights, const ModelConfig& config,
                               const InductionBatch& batch) {
  config.validate();
  check_shapes(weights, config);
  const size_t n = static_cast<size_t>(batch.batch) * batch.seq;
  if (batch.tokens.size() != n || batch.loss_mask.size() != n) {
    throw UsageError("induction batch buffers do not match batch x seq");
  }
  detail::check_tokens(batch.tokens, batch.seq, config);

  ForwardCache<T> cache;
  detail::ForwardOptions<T> opts;
  opts.cache = &cache;
  const Matrix<T> logits =
      detail::run_forward(weights, config, batch.tokens, batch.batch, batch.seq, opts);

  size_t count = 0;
  for (size_t r = 0; r < n; ++r) {
    if (batch.loss_mask[r] == 0) continue;
    if (static_cast<int>(r % static_cast<size_t>(batch.seq)) == batch.seq - 1) {
      throw UsageError("loss_mask set on the last position of a row");
    }
    ++count;
  }
  if (count == 0) throw UsageError("loss_mask selects no positions");

  Matrix<T> dlogits = Matrix<T>::Zero(logits.rows(), logits.cols());
  const T inv = T(1) / static_cast<T>(count);
  double loss = 0.0;
  for (size_t r = 0; r < n; ++r) {
    if (batch.loss_mask[r] == 0) continue;
    const auto row = logits.row(static_cast<Eigen::Index>(r));
    const int target = batch.tokens[r + 1];
    const T mx = row.maxCoeff();
    auto ex = (row.array() - mx).exp();
    const T sum = ex.sum();
    loss += static_cast<double>(mx + std::log(sum) - row(target));
    dlogits.row(static_cast<Eigen::Index>(r)) = (ex / sum * inv).matrix();
    dlogits(static_cast<Eigen::Index>(r), target) -= inv;
  }
  loss /= static_cast<double>(count);
  if (!std::isfinite(loss)) throw DivergenceError(-1, "non-finite loss");

  LossAndGrads<T> out;
  out.loss = loss;
  out.grads = zero_weights<T>(config);
  backward(weights, config, cache, dlogits, out.grads);
  return out;
}

template LossAndGrads<float> loss_and_grads(const BasicWeights<float>&, const ModelConfig&,
                                            const InductionBatch&);
template LossAndGrads<double> loss_and_grads(const BasicWeights<double>&, const ModelConfig&,
                                             const InductionBatch&);

OptimizerState OptimizerState::zeros(const ModelConfig& config) {
  OptimizerState s;
  s.first_moment = zero_weights<float>(config);
  s.second_moment = zero_weights<float>(config);
  return s;
}

void adam_update(std::span<float> params, std::span<const float> grads, std::span<float> m,
                 std::span<float> v, long step, const AdamHyper& hyper) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw UsageError("adam_update: buffer sizes differ");
  }
  const double b1 = hyper.beta1;
  const double b2 = hyper.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    const double update = hyper.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + hyper.eps);
    params[i] = static_cast<float>(params[i] - update);
  }
}

void adam_step(ModelWeights& weights, const ModelWeights& grads, OptimizerState& state,
               const AdamHyper& hyper, const ModelConfig& config) {
  auto p = parameters(weights, config);
  auto g = parameters(grads, config);
  auto m = parameters(state.first_moment, config);
  auto v = parameters(state.second_moment, config);
  ++state.step;
  for (size_t i = 0; i < p.size(); ++i) {
    adam_update(p[i].values, g[i].values, m[i].values, v[i].values, state.step, hyper);
  }
}

ModelWeights init_weights(const ModelConfig& config, std::mt19937_64& rng) {
  config.validate();
  ModelWeights w = zero_weights<float>(config);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  auto fill = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  };
  fill(w.W_E);
  fill(w.W_P);
  for (auto& b : w.blocks) {
    b.ln1_w.setOnes();
    b.ln2_w.setOnes();
    fill(b.W_Q);
    fill(b.W_K);
    fill(b.W_V);
    fill(b.W_O);
    fill(b.W_in);
    fill(b.W_out);
  }
  w.ln_f_w.setOnes();
  return w;
}

std::vector<long> default_checkpoint_schedule(long steps) {
  std::vector<long> out{0};
  for (long p = 1; p <= steps; p *= 2) out.push_back(p);
  for (long m = 500; m <= steps; m += 500) out.push_back(m);
  out.push_back(steps);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void TrainConfig::validate() const {
  model.validate();
  if (steps < 0) throw UsageError("steps must be >= 0");
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (seq_len < 2 || seq_len % 2 != 0) throw UsageError("seq_len must be even and >= 2");
  if (seq_len > model.n_ctx) throw UsageError("seq_len exceeds n_ctx");
  if (checkpoint_schedule.empty() || checkpoint_schedule.front() != 0 ||
      checkpoint_schedule.back() != steps) {
    throw UsageError("checkpoint schedule must start at 0 and end at steps");
  }
  if (!std::is_sorted(checkpoint_schedule.begin(), checkpoint_schedule.end()) ||
      std::adjacent_find(checkpoint_schedule.begin(), checkpoint_schedule.end()) !=
          checkpoint_schedule.end()) {
    throw UsageError("checkpoint schedule must be strictly increasing");
  }
  if (!(adam.learning_rate > 0.0)) throw UsageError("learning rate must be > 0");
}

InductionAccuracy evaluate_induction(const ModelWeights& weights, const ModelConfig& config,
                                     std::uint64_t seed, int num_batches, int batch_size,
                                     int seq_len) {
  std::mt19937_64 rng(seed);
  long rep_hit = 0, rep_total = 0, first_hit = 0, first_total = 0;
  const int half = seq_len / 2;
  for (int i = 0; i < num_batches; ++i) {
    InductionBatch b = make_induction_batch(rng, batch_size, seq_len, config.vocab_size);
    detail::check_tokens(b.tokens, b.seq, config);
    detail::ForwardOptions<float> opts;
    Matrix<float> logits = detail::run_forward(weights, config, b.tokens, b.batch, b.seq, opts);
    for (int r = 0; r < b.batch; ++r) {
      for (int t = 0; t + 1 < seq_len; ++t) {
        const size_t idx = static_cast<size_t>(r) * seq_len + t;
        Eigen::Index arg = 0;
        logits.row(static_cast<Eigen::Index>(idx)).maxCoeff(&arg);
        const bool hit = static_cast<int>(arg) == b.tokens[idx + 1];
        if (b.loss_mask[idx] != 0) {
          rep_total++;
          rep_hit += hit;
        } else if (t + 1 < half) {
          first_total++;
          first_hit += hit;
        }
      }
    }
  }
  InductionAccuracy acc;
  if (rep_total > 0) acc.repeated_half = static_cast<double>(rep_hit) / rep_total;
  if (first_total > 0) acc.first_half = static_cast<double>(first_hit) / first_total;
  return acc;
}

AnalysisInput make_induction_prompt(std::uint64_t seed, int seq_len, int vocab_size) {
  std::mt19937_64 rng(seed);
  InductionBatch b = make_induction_batch(rng, 1, seq_len, vocab_size);
  AnalysisInput input;
  input.tokens.assign(b.tokens.begin(), b.tokens.end() - 1);
  input.target = b.tokens.back();
  return input;
}

CheckpointManifest train(const TrainConfig& config,
                         const std::function<void(const TrainProgress&)>& on_step) {
  config.validate();
  namespace fs = std::filesystem;
  const ModelConfig& mc = config.model;
  const fs::path ckpt_dir = config.out_dir / "checkpoints";
  fs::create_directories(ckpt_dir);

  std::ofstream log(config.out_dir / "train_log.csv", std::ios::trunc);
  if (!log) throw DataError("cannot write " + (config.out_dir / "train_log.csv").string());
  log << "step,loss\n";
  log.precision(9);

  std::mt19937_64 init_rng(config.seed);
  std::mt19937_64 data_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  ModelWeights weights = init_weights(mc, init_rng);
  OptimizerState state = OptimizerState::zeros(mc);

  CheckpointManifest manifest;
  manifest.model_config = mc;
  auto next_ckpt = config.checkpoint_schedule.begin();
  for (long step = 0;; ++step) {
    if (next_ckpt != config.checkpoint_schedule.end() && *next_ckpt == step) {
      char name[64];
      std::snprintf(name, sizeof(name), "step_%06ld.cgt", step);
      save_checkpoint(weights, mc, step, ckpt_dir / name);
      manifest.checkpoints.push_back({step, fs::path("checkpoints") / name});
      ++next_ckpt;
    }
    if (step == config.steps) break;
    InductionBatch batch = make_induction_batch(data_rng, config.batch_size, config.seq_len,
                                                mc.vocab_size);
    LossAndGrads<float> lg;
    try {
      lg = loss_and_grads(weights, mc, batch);
    } catch (const DivergenceError&) {
      throw DivergenceError(step, "non-finite loss at step " + std::to_string(step));
    }
    log << step << ',' << lg.loss << '\n';
    if (on_step) on_step({step, lg.loss});
    adam_step(weights, lg.grads, state, config.adam, mc);
  }
  write_manifest(manifest, config.out_dir / "manifest.json");
  write_tokens_file(make_induction_prompt(config.seed + 1, config.seq_len, mc.vocab_size),
                    config.out_dir / "tokens.json");
  for (auto& e : manifest.checkpoints) e.path = config.out_dir / e.path;
  return manifest;
}

}  // namespace compgraph
