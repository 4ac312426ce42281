#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace fixtures {

using compgraph::ModelConfig;

ModelConfig small_config(int layers, int heads, int d_model, int d_head, int d_mlp, int vocab,
                         int n_ctx) {
  ModelConfig c;
  c.n_layers = layers;
  c.n_heads = heads;
  c.d_model = d_model;
  c.d_head = d_head;
  c.d_mlp = d_mlp;
  c.vocab_size = vocab;
  c.n_ctx = n_ctx;
  return c;
}

ModelConfig hand_config() { return small_config(1, 1, 2, 2, 2, 3, 4); }

compgraph::ModelWeights hand_weights() {
  const ModelConfig c = hand_config();
  auto w = compgraph::zero_weights<float>(c);
  w.W_E << 1.0f, 0.5f,  //
      -0.5f, 1.0f,      //
      0.25f, -1.0f;
  w.W_P << 0.1f, 0.0f,  //
      0.0f, 0.2f,       //
      -0.1f, 0.1f,      //
      0.3f, -0.2f;
  auto& b = w.blocks[0];
  b.ln1_w << 1.0f, 0.8f;
  b.ln1_b << 0.1f, -0.1f;
  b.W_Q << 0.5f, -0.3f, 0.2f, 0.7f;
  b.W_K << 0.4f, 0.1f, -0.6f, 0.3f;
  b.W_V << 1.0f, 0.2f, -0.2f, 0.9f;
  b.b_Q << 0.05f, 0.0f;
  b.b_K << 0.0f, -0.05f;
  b.b_V << 0.1f, 0.1f;
  b.W_O << 0.8f, -0.4f, 0.3f, 0.6f;
  b.b_O << 0.02f, -0.03f;
  b.ln2_w << 0.9f, 1.1f;
  b.ln2_b << 0.0f, 0.05f;
  b.W_in << 0.7f, -0.5f, 0.4f, 0.9f;
  b.b_in << 0.1f, -0.2f;
  b.W_out << 0.6f, 0.2f, -0.3f, 0.5f;
  b.b_out << 0.01f, 0.02f;
  w.ln_f_w << 1.2f, 0.7f;
  w.ln_f_b << -0.1f, 0.2f;
  w.W_U << 1.0f, -0.5f, 0.3f,  //
      0.2f, 0.8f, -1.1f;
  return w;
}

TempDir::TempDir(const std::string& prefix) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          (prefix + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fixtures
