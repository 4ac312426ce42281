#include "dense_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

using compgraph::BlockStyle;
using compgraph::MlpActivation;
using compgraph::ModelConfig;
using compgraph::PosStyle;

TensorMap flatten(const compgraph::ModelWeights& w, const ModelConfig& c) {
  TensorMap out;
  for (const auto& p : compgraph::parameters(w, c)) {
    out[p.name] = Vec(p.values.begin(), p.values.end());
  }
  return out;
}

namespace {

Mat zeros(size_t r, size_t c) { return Mat(r, Vec(c, 0.0)); }

// x[seq][in] times W stored flat as [in][out] starting at `offset`.
Mat matmul(const Mat& x, const Vec& w, size_t in, size_t out, size_t offset = 0) {
  Mat y = zeros(x.size(), out);
  for (size_t r = 0; r < x.size(); ++r) {
    for (size_t k = 0; k < in; ++k) {
      for (size_t j = 0; j < out; ++j) y[r][j] += x[r][k] * w[offset + k * out + j];
    }
  }
  return y;
}

void add_bias(Mat& x, const Vec& b, size_t offset = 0) {
  for (auto& row : x) {
    for (size_t j = 0; j < row.size(); ++j) row[j] += b[offset + j];
  }
}

Mat add(const Mat& a, const Mat& b) {
  Mat y = a;
  for (size_t r = 0; r < a.size(); ++r) {
    for (size_t j = 0; j < a[r].size(); ++j) y[r][j] += b[r][j];
  }
  return y;
}

Mat layer_norm(const Mat& x, const Vec& g, const Vec& b, double eps) {
  Mat y = x;
  for (size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mean = 0;
    for (double v : x[r]) mean += v;
    mean /= n;
    double var = 0;
    for (double v : x[r]) var += (v - mean) * (v - mean);
    var /= n;
    for (size_t j = 0; j < x[r].size(); ++j) {
      y[r][j] = (x[r][j] - mean) / std::sqrt(var + eps) * g[j] + b[j];
    }
  }
  return y;
}

double gelu(double x, MlpActivation act) {
  if (act == MlpActivation::kGeluExact) return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double k = std::sqrt(2.0 / M_PI);
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

// Pairs (i, i + rot/2), angle pos * base^(-2i/rot).
void rotate(Mat& x, double base, int rot) {
  const int half = rot / 2;
  for (size_t pos = 0; pos < x.size(); ++pos) {
    for (int i = 0; i < half; ++i) {
      const double theta = static_cast<double>(pos) * std::pow(base, -2.0 * i / rot);
      const double a = x[pos][static_cast<size_t>(i)];
      const double b = x[pos][static_cast<size_t>(i + half)];
      x[pos][static_cast<size_t>(i)] = a * std::cos(theta) - b * std::sin(theta);
      x[pos][static_cast<size_t>(i + half)] = a * std::sin(theta) + b * std::cos(theta);
    }
  }
}

}  // namespace

DenseResult dense_forward(const TensorMap& t, const ModelConfig& c, const std::vector<int>& tokens,
                          std::optional<int> ablate) {
  const size_t seq = tokens.size();
  const size_t d = static_cast<size_t>(c.d_model);
  const size_t dh = static_cast<size_t>(c.d_head);
  const size_t H = static_cast<size_t>(c.n_heads);
  const size_t dm = static_cast<size_t>(c.d_mlp);
  DenseResult res;
  res.contributions.assign(static_cast<size_t>(c.num_components()), Mat());
  int comp = 0;
  auto emit = [&](Mat& m) {
    if (ablate && *ablate == comp) m = zeros(m.size(), m.empty() ? 0 : m[0].size());
    res.contributions[static_cast<size_t>(comp)] = m;
    ++comp;
  };

  const Vec& WE = t.at("embed.W_E");
  Mat h = zeros(seq, d);
  for (size_t p = 0; p < seq; ++p) {
    for (size_t j = 0; j < d; ++j) {
      h[p][j] = WE[static_cast<size_t>(tokens[p]) * d + j];
      if (c.pos_style == PosStyle::kLearnedAbsolute) h[p][j] += t.at("pos.W_P")[p * d + j];
    }
  }
  emit(h);

  for (int l = 0; l < c.n_layers; ++l) {
    const std::string pre = "blocks." + std::to_string(l) + ".";
    auto T = [&](const std::string& name) -> const Vec& { return t.at(pre + name); };

    auto attention = [&](const Mat& x) {
      Mat total = zeros(seq, d);
      for (size_t hh = 0; hh < H; ++hh) {
        Mat q = matmul(x, T("attn.W_Q"), d, dh, hh * d * dh);
        Mat k = matmul(x, T("attn.W_K"), d, dh, hh * d * dh);
        Mat v = matmul(x, T("attn.W_V"), d, dh, hh * d * dh);
        add_bias(q, T("attn.b_Q"), hh * dh);
        add_bias(k, T("attn.b_K"), hh * dh);
        add_bias(v, T("attn.b_V"), hh * dh);
        if (c.pos_style == PosStyle::kRotary) {
          rotate(q, c.rotary_base, c.effective_rotary_dim());
          rotate(k, c.rotary_base, c.effective_rotary_dim());
        }
        Mat z = zeros(seq, dh);
        for (size_t i = 0; i < seq; ++i) {
          Vec s(seq, -std::numeric_limits<double>::infinity());
          for (size_t j = 0; j <= i; ++j) {
            double dot = 0;
            for (size_t e = 0; e < dh; ++e) dot += q[i][e] * k[j][e];
            s[j] = dot / std::sqrt(static_cast<double>(dh));
          }
          const double mx = *std::max_element(s.begin(), s.begin() + static_cast<long>(i) + 1);
          double sum = 0;
          for (size_t j = 0; j <= i; ++j) sum += std::exp(s[j] - mx);
          for (size_t j = 0; j <= i; ++j) {
            const double p = std::exp(s[j] - mx) / sum;
            for (size_t e = 0; e < dh; ++e) z[i][e] += p * v[j][e];
          }
        }
        Mat out = matmul(z, T("attn.W_O"), dh, d, hh * dh * d);
        for (auto& row : out) {
          for (size_t j = 0; j < d; ++j) row[j] += T("attn.b_O")[j] / static_cast<double>(H);
        }
        emit(out);
        total = add(total, out);
      }
      return total;
    };
    auto mlp = [&](const Mat& x) {
      Mat a = matmul(x, T("mlp.W_in"), d, dm);
      add_bias(a, T("mlp.b_in"));
      for (auto& row : a) {
        for (double& v : row) v = gelu(v, c.mlp_activation);
      }
      Mat out = matmul(a, T("mlp.W_out"), dm, d);
      add_bias(out, T("mlp.b_out"));
      emit(out);
      return out;
    };

    switch (c.block_style) {
      case BlockStyle::kPreLnSequential:
        h = add(h, attention(layer_norm(h, T("ln1.w"), T("ln1.b"), c.ln_eps)));
        h = add(h, mlp(layer_norm(h, T("ln2.w"), T("ln2.b"), c.ln_eps)));
        break;
      case BlockStyle::kPostLnSequential:
        h = layer_norm(add(h, attention(h)), T("ln1.w"), T("ln1.b"), c.ln_eps);
        h = layer_norm(add(h, mlp(h)), T("ln2.w"), T("ln2.b"), c.ln_eps);
        break;
      case BlockStyle::kParallelResidual: {
        Mat a = attention(layer_norm(h, T("ln1.w"), T("ln1.b"), c.ln_eps));
        Mat m = mlp(layer_norm(h, T("ln2.w"), T("ln2.b"), c.ln_eps));
        h = add(add(h, a), m);
        break;
      }
    }
  }
  res.final_residual = h;
  res.logits = matmul(layer_norm(h, t.at("ln_f.w"), t.at("ln_f.b"), c.ln_eps), t.at("unembed.W_U"),
                      d, static_cast<size_t>(c.vocab_size));
  return res;
}

double dense_cosine(const Mat& a, const Mat& b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t r = 0; r < a.size(); ++r) {
    for (size_t j = 0; j < a[r].size(); ++j) {
      dot += a[r][j] * b[r][j];
      na += a[r][j] * a[r][j];
      nb += b[r][j] * b[r][j];
    }
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return dot / (na * nb);
}

double max_rel_error(const Mat& got, const Mat& want) {
  double num = 0, den = 0;
  for (size_t r = 0; r < want.size(); ++r) {
    for (size_t j = 0; j < want[r].size(); ++j) {
      num = std::max(num, std::abs(got[r][j] - want[r][j]));
      den = std::max(den, std::abs(want[r][j]));
    }
  }
  return den == 0 ? num : num / den;
}

}  // namespace oracle
