#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "compgraph/checkpoint.hpp"
#include "compgraph/influence.hpp"
#include "compgraph/model.hpp"

namespace compgraph {

// Rows of random tokens whose second half repeats the first half.
struct InductionBatch {
  int batch = 0;
  int seq = 0;
  std::vector<int> tokens;             // [batch * seq]
  std::vector<std::uint8_t> loss_mask;  // [batch * seq]; row r predicts tokens[r + 1]
};

// loss_mask is set exactly where the next token lies in the repeated half,
// i.e. positions seq/2 - 1 .. seq - 2 of every row.
InductionBatch make_induction_batch(std::mt19937_64& rng, int batch_size, int seq_len,
                                    int vocab_size);

template <class T>
struct LossAndGrads {
  double loss = 0.0;
  BasicWeights<T> grads;
};

// Mean masked next-token cross-entropy and its gradient for every tensor.
// Throws DivergenceError (step -1) on a non-finite loss.
template <class T>
LossAndGrads<T> loss_and_grads(const BasicWeights<T>& weights, const ModelConfig& config,
                               const InductionBatch& batch);

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  ModelWeights first_moment;
  ModelWeights second_moment;
  long step = 0;

  static OptimizerState zeros(const ModelConfig& config);
};

// Bias-corrected Adam on flat buffers; `step` is the 1-based step number.
void adam_update(std::span<float> params, std::span<const float> grads, std::span<float> m,
                 std::span<float> v, long step, const AdamHyper& hyper);

// Increments state.step, then updates every tensor of `weights` in place.
void adam_step(ModelWeights& weights, const ModelWeights& grads, OptimizerState& state,
               const AdamHyper& hyper, const ModelConfig& config);

// normal(0, 0.02) embeddings and projections, zero biases, unit LN scales,
// zero unembedding so the initial loss is exactly ln(vocab_size).
ModelWeights init_weights(const ModelConfig& config, std::mt19937_64& rng);

// {0} U {2^k <= steps} U {multiples of 500 <= steps} U {steps}, sorted.
std::vector<long> default_checkpoint_schedule(long steps);

struct TrainConfig {
  ModelConfig model;
  long steps = 5000;
  int batch_size = 32;
  int seq_len = 64;
  AdamHyper adam;
  std::uint64_t seed = 0;
  std::vector<long> checkpoint_schedule = default_checkpoint_schedule(5000);
  std::filesystem::path out_dir;

  void validate() const;
};

struct InductionAccuracy {
  double repeated_half = 0.0;  // argmax accuracy where loss_mask is set
  double first_half = 0.0;     // predictions of positions 1 .. seq/2 - 1
};

InductionAccuracy evaluate_induction(const ModelWeights& weights, const ModelConfig& config,
                                     std::uint64_t seed, int num_batches, int batch_size,
                                     int seq_len);

// Analysis prompt: a random half repeated, cut one token short; the target
// is the token that completes the repetition.
AnalysisInput make_induction_prompt(std::uint64_t seed, int seq_len, int vocab_size);

struct TrainProgress {
  long step;
  double loss;
};

// Writes checkpoints/step_XXXXXX.cgt at each scheduled step, manifest.json,
// train_log.csv (step,loss) and tokens.json under out_dir. The returned
// manifest has paths prefixed with out_dir.
CheckpointManifest train(const TrainConfig& config,
                         const std::function<void(const TrainProgress&)>& on_step = {});

}  // namespace compgraph
