#pragma once

// Straight-line double-precision reimplementation of the transformer forward
// pass, used to check the Eigen implementation. Reads weights only through
// the canonical flat tensors.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "compgraph/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, Mat[row][col]

struct DenseResult {
  std::vector<Mat> contributions;  // stage order, each [seq][d_model]
  Mat final_residual;
  Mat logits;
};

// Flat copies of every canonical tensor.
using TensorMap = std::map<std::string, Vec>;

TensorMap flatten(const compgraph::ModelWeights& w, const compgraph::ModelConfig& c);

// `ablate` is a stage-order component index.
DenseResult dense_forward(const TensorMap& t, const compgraph::ModelConfig& c,
                          const std::vector<int>& tokens, std::optional<int> ablate = {});

double dense_cosine(const Mat& a, const Mat& b);
double max_rel_error(const Mat& got, const Mat& want);

}  // namespace oracle
