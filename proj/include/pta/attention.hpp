#pragma once

// Transformer building blocks: sinusoidal positions, scaled dot-product and
// multi-head attention, the position-wise feed-forward network, the input
// projection, and residual + layer-norm wiring.

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "pta/tensor.hpp"

namespace pta {

/// Additive logit used for masked key positions.
inline constexpr double kMaskedLogit = -1e9;

template <typename Scalar = double>
Eigen::Matrix<Scalar, 1, Eigen::Dynamic> positional_encoding(Index pos, Index d_model) {
  if (d_model <= 0 || d_model % 2 != 0) {
    throw ContractError("positional_encoding: d_model must be positive and even, got " +
                        std::to_string(d_model));
  }
  if (pos < 0) throw ContractError("positional_encoding: negative position");
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> pe(d_model);
  for (Index j = 0; j < d_model / 2; ++j) {
    const Scalar freq = std::pow(Scalar(10000), Scalar(2 * j) / Scalar(d_model));
    const Scalar angle = Scalar(pos) / freq;
    pe(2 * j) = std::sin(angle);
    pe(2 * j + 1) = std::cos(angle);
  }
  return pe;
}

/// Rows 0..n-1 of the sinusoidal table.
Matrix positional_encodings(Index n, Index d_model);

/// Lower-triangular additive mask: row i may attend to keys 0..i.
Matrix causal_mask(Index n);

struct ForwardContext {
  bool training = false;
  double dropout_p = 0.0;
  std::mt19937_64* rng = nullptr;

  Tensor drop(const Tensor& x) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

/// Per-head projections stored side by side: head i owns columns
/// [i*d_k, (i+1)*d_k) of w_q, w_k and w_v.
struct MultiHeadParams {
  Tensor w_q, w_k, w_v, w_o;
  int heads = 1;

  Index d_model() const { return w_q.rows(); }
  Index d_head() const { return w_q.cols() / heads; }
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct InputProjection {
  Tensor w, b;
};

/// Uniform Glorot initialization, +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng);

MultiHeadParams make_multi_head(Index d_model, int heads, std::mt19937_64& rng);
FeedForwardParams make_feed_forward(Index d_model, Index d_ff, std::mt19937_64& rng);
InputProjection make_input_projection(Index d_in, Index d_model, std::mt19937_64& rng);
LayerNormParams make_layer_norm(Index d_model);

/// softmax(Q K^T / sqrt(d_k) + mask) V. `mask` is additive, n_q x n_k.
Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    const Matrix* mask = nullptr);

/// The attention weights alone (no graph), for inspection and tests.
Matrix attention_weights(const Matrix& q, const Matrix& k, const Matrix* mask = nullptr);

Tensor multi_head_attention(const MultiHeadParams& params, const Tensor& q_in, const Tensor& k_in,
                            const Tensor& v_in, const Matrix* mask = nullptr);

/// Keys and values projected once, reusable across many queries.
struct ProjectedMemory {
  Tensor keys;
  Tensor values;
};
ProjectedMemory project_memory(const MultiHeadParams& params, const Tensor& memory);
Tensor multi_head_attention(const MultiHeadParams& params, const Tensor& q_in,
                            const ProjectedMemory& memory, const Matrix* mask = nullptr);

Tensor feed_forward(const FeedForwardParams& params, const Tensor& x);

/// max(0, x W + b) followed by layer normalization.
Tensor project_input(const InputProjection& proj, const LayerNormParams& norm, const Tensor& x);

/// LayerNorm(x + Dropout(sublayer(x))).
Tensor residual_norm_block(const std::function<Tensor(const Tensor&)>& sublayer, const Tensor& x,
                           const LayerNormParams& norm, const ForwardContext& ctx);

}  // namespace pta
