#include "pta/attention.hpp"

#include <vector>

namespace pta {

Matrix positional_encodings(Index n, Index d_model) {
  Matrix table(n, d_model);
  for (Index pos = 0; pos < n; ++pos) table.row(pos) = positional_encoding<double>(pos, d_model);
  return table;
}

Matrix causal_mask(Index n) {
  Matrix mask = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) mask(i, j) = kMaskedLogit;
  }
  return mask;
}

Tensor ForwardContext::drop(const Tensor& x) const {
  if (!training || dropout_p == 0.0) return x;
  if (rng == nullptr) throw ContractError("ForwardContext: training dropout needs an rng");
  return dropout(x, dropout_p, true, *rng);
}

Matrix glorot_uniform(Index fan_in, Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

MultiHeadParams make_multi_head(Index d_model, int heads, std::mt19937_64& rng) {
  if (heads <= 0 || d_model % heads != 0) {
    throw ContractError("multi-head: d_model " + std::to_string(d_model) +
                        " is not divisible by " + std::to_string(heads) + " heads");
  }
  MultiHeadParams p;
  p.heads = heads;
  p.w_q = Tensor::parameter(glorot_uniform(d_model, d_model, rng));
  p.w_k = Tensor::parameter(glorot_uniform(d_model, d_model, rng));
  p.w_v = Tensor::parameter(glorot_uniform(d_model, d_model, rng));
  p.w_o = Tensor::parameter(glorot_uniform(d_model, d_model, rng));
  return p;
}

FeedForwardParams make_feed_forward(Index d_model, Index d_ff, std::mt19937_64& rng) {
  FeedForwardParams p;
  p.w1 = Tensor::parameter(glorot_uniform(d_model, d_ff, rng));
  p.b1 = Tensor::parameter(Matrix::Zero(1, d_ff));
  p.w2 = Tensor::parameter(glorot_uniform(d_ff, d_model, rng));
  p.b2 = Tensor::parameter(Matrix::Zero(1, d_model));
  return p;
}

InputProjection make_input_projection(Index d_in, Index d_model, std::mt19937_64& rng) {
  return {Tensor::parameter(glorot_uniform(d_in, d_model, rng)),
          Tensor::parameter(Matrix::Zero(1, d_model))};
}

LayerNormParams make_layer_norm(Index d_model) {
  return {Tensor::parameter(Matrix::Ones(1, d_model)), Tensor::parameter(Matrix::Zero(1, d_model))};
}

Tensor scaled_dot_product_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                    const Matrix* mask) {
  if (k.rows() == 0) throw ContractError("attention: empty key set");
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: query " + q.shape_string() + " and key " + k.shape_string() +
                         " widths differ");
  }
  if (k.rows() != v.rows()) {
    throw DimensionError("attention: key " + k.shape_string() + " and value " + v.shape_string() +
                         " row counts differ");
  }
  Tensor logits = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (mask != nullptr) {
    if (mask->rows() != logits.rows() || mask->cols() != logits.cols()) {
      throw DimensionError("attention: mask does not match logits " + logits.shape_string());
    }
    logits = add(logits, Tensor::constant(*mask));
  }
  return matmul(softmax(logits, 1), v);
}

Matrix attention_weights(const Matrix& q, const Matrix& k, const Matrix* mask) {
  Matrix logits = (q * k.transpose()) / std::sqrt(static_cast<double>(q.cols()));
  if (mask != nullptr) logits += *mask;
  return softmax_rows(logits);
}

ProjectedMemory project_memory(const MultiHeadParams& params, const Tensor& memory) {
  if (memory.cols() != params.d_model()) {
    throw DimensionError("multi_head_attention: memory " + memory.shape_string() +
                         " does not have width " + std::to_string(params.d_model()));
  }
  return {matmul(memory, params.w_k), matmul(memory, params.w_v)};
}

Tensor multi_head_attention(const MultiHeadParams& params, const Tensor& q_in,
                            const ProjectedMemory& memory, const Matrix* mask) {
  if (q_in.cols() != params.d_model()) {
    throw DimensionError("multi_head_attention: query " + q_in.shape_string() +
                         " does not have width " + std::to_string(params.d_model()));
  }
  Tensor q = matmul(q_in, params.w_q);
  if (params.heads == 1) {
    return matmul(scaled_dot_product_attention(q, memory.keys, memory.values, mask), params.w_o);
  }
  const Index dh = params.d_head();
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(params.heads));
  for (int h = 0; h < params.heads; ++h) {
    heads.push_back(scaled_dot_product_attention(slice_cols(q, h * dh, dh),
                                                 slice_cols(memory.keys, h * dh, dh),
                                                 slice_cols(memory.values, h * dh, dh), mask));
  }
  return matmul(concat(std::span<const Tensor>(heads), 1), params.w_o);
}

Tensor multi_head_attention(const MultiHeadParams& params, const Tensor& q_in, const Tensor& k_in,
                            const Tensor& v_in, const Matrix* mask) {
  if (k_in.cols() != params.d_model() || v_in.cols() != params.d_model()) {
    throw DimensionError("multi_head_attention: key " + k_in.shape_string() + " / value " +
                         v_in.shape_string() + " do not have width " +
                         std::to_string(params.d_model()));
  }
  ProjectedMemory memory{matmul(k_in, params.w_k), matmul(v_in, params.w_v)};
  return multi_head_attention(params, q_in, memory, mask);
}

Tensor feed_forward(const FeedForwardParams& params, const Tensor& x) {
  Tensor hidden = relu(add_row(matmul(x, params.w1), params.b1));
  return add_row(matmul(hidden, params.w2), params.b2);
}

Tensor project_input(const InputProjection& proj, const LayerNormParams& norm, const Tensor& x) {
  return layer_norm(relu(add_row(matmul(x, proj.w), proj.b)), norm.gain, norm.bias);
}

Tensor residual_norm_block(const std::function<Tensor(const Tensor&)>& sublayer, const Tensor& x,
                           const LayerNormParams& norm, const ForwardContext& ctx) {
  Tensor y = sublayer(x);
  if (y.rows() != x.rows() || y.cols() != x.cols()) {
    throw DimensionError("residual_norm_block: sublayer maps " + x.shape_string() + " to " +
                         y.shape_string());
  }
  return layer_norm(add(x, ctx.drop(y)), norm.gain, norm.bias);
}

}  // namespace pta
