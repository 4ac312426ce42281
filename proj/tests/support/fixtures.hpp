#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "compgraph/model.hpp"
#include "compgraph/trainer.hpp"

namespace fixtures {

// Every tensor drawn from normal(0, scale); LN scales around 1.
template <class T>
compgraph::BasicWeights<T> random_weights(const compgraph::ModelConfig& c, std::uint64_t seed,
                                          double scale = 0.3) {
  auto w = compgraph::zero_weights<T>(c);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& p : compgraph::parameters(w, c)) {
    const bool ln_scale = p.name.ends_with("ln1.w") || p.name.ends_with("ln2.w") ||
                          p.name == "ln_f.w";
    for (auto& v : p.values) v = static_cast<T>(ln_scale ? 1.0 + nd(rng) : nd(rng));
  }
  return w;
}

compgraph::ModelConfig small_config(int layers, int heads, int d_model, int d_head, int d_mlp,
                                    int vocab, int n_ctx);

// 1 layer, 1 head, d_model = d_head = 2, with hand-picked weights.
compgraph::ModelConfig hand_config();
compgraph::ModelWeights hand_weights();

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace fixtures
