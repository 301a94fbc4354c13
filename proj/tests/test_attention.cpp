#include <cmath>
#include <random>

#include "doctest.h"
#include "pta/attention.hpp"
#include "support.hpp"

using namespace pta;
using pta::test::max_fd_error;
using pta::test::random_matrix;

namespace {

// Direct evaluation of softmax(QK^T / sqrt(d)) V with explicit loops.
Matrix naive_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (Index i = 0; i < q.rows(); ++i) {
    std::vector<double> logits(static_cast<std::size_t>(k.rows()));
    double top = -1e300;
    for (Index j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (Index c = 0; c < q.cols(); ++c) dot += q(i, c) * k(j, c);
      logits[static_cast<std::size_t>(j)] = dot * s;
      top = std::max(top, dot * s);
    }
    double z = 0.0;
    for (double& l : logits) z += (l = std::exp(l - top));
    for (Index j = 0; j < k.rows(); ++j)
      for (Index c = 0; c < v.cols(); ++c) out(i, c) += logits[static_cast<std::size_t>(j)] / z * v(j, c);
  }
  return out;
}

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("positional encoding identities") {
  const RowVector p0 = positional_encoding(0, 16);
  for (Index j = 0; j < 8; ++j) {
    CHECK(p0(2 * j) == 0.0);
    CHECK(p0(2 * j + 1) == 1.0);
  }
  CHECK(positional_encoding(1, 16)(0) == doctest::Approx(0.841471).epsilon(1e-6));
  for (Index pos : {1, 7, 50, 399}) {
    const RowVector p = positional_encoding(pos, 32);
    for (Index j = 0; j < 16; ++j) CHECK(std::abs(p(2 * j) * p(2 * j) + p(2 * j + 1) * p(2 * j + 1) - 1.0) <= 1e-9);
  }
  CHECK_THROWS_AS(positional_encoding(0, 7), ContractError);
  const Matrix table = positional_encodings(5, 8);
  CHECK(table.row(3) == positional_encoding(3, 8));
  // Templated on the scalar type.
  CHECK(positional_encoding<float>(1, 4)(0) == doctest::Approx(std::sin(1.0f)));
}

TEST_CASE("attention closed forms") {
  std::mt19937_64 rng(2);
  const Matrix q = random_matrix(4, 6, rng), k1 = random_matrix(1, 6, rng), v1 = random_matrix(1, 5, rng);
  const Matrix out = scaled_dot_product_attention(Tensor::constant(q), Tensor::constant(k1), Tensor::constant(v1)).value();
  for (Index i = 0; i < 4; ++i) CHECK((out.row(i) - v1).cwiseAbs().maxCoeff() <= 1e-9);

  // Queries orthogonal to every key: uniform weights, output = mean of V.
  Matrix qo = Matrix::Zero(2, 4);
  qo(0, 0) = 1.0;
  qo(1, 0) = -3.0;
  Matrix ko = Matrix::Zero(3, 4);
  ko(0, 1) = 2.0;
  ko(1, 2) = -1.0;
  ko(2, 3) = 5.0;
  const Matrix vo = random_matrix(3, 2, rng);
  const Matrix mean = scaled_dot_product_attention(Tensor::constant(qo), Tensor::constant(ko), Tensor::constant(vo)).value();
  for (Index i = 0; i < 2; ++i) CHECK((mean.row(i) - vo.colwise().mean()).cwiseAbs().maxCoeff() <= 1e-12);

  const Matrix q3 = random_matrix(3, 3, rng), k3 = random_matrix(3, 3, rng), v3 = random_matrix(3, 3, rng);
  const Matrix dense = scaled_dot_product_attention(Tensor::constant(q3), Tensor::constant(k3), Tensor::constant(v3)).value();
  CHECK((dense - naive_attention(q3, k3, v3)).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(scaled_dot_product_attention(Tensor::constant(q3), Tensor::constant(Matrix(0, 3)),
                                               Tensor::constant(Matrix(0, 3))),
                  ContractError);
}

TEST_CASE("softmax shift invariance") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = random_matrix(3, 7, rng, 3.0);
    const Matrix shifted = x.array() + 123.456;
    CHECK((softmax_rows(x) - softmax_rows(shifted)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((softmax(Tensor::constant(x)).value() - softmax(Tensor::constant(shifted)).value()).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("causal mask blocks the future") {
  const Matrix mask = causal_mask(4);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) CHECK(mask(i, j) == (j <= i ? 0.0 : kMaskedLogit));
  std::mt19937_64 rng(6);
  const Matrix q = random_matrix(4, 3, rng), k = random_matrix(4, 3, rng);
  const Matrix w = attention_weights(q, k, &mask);
  CHECK(w(0, 0) == doctest::Approx(1.0));
  CHECK(w(1, 2) < 1e-300);
}

TEST_CASE("multi-head attention") {
  std::mt19937_64 rng(8);
  const MultiHeadParams p = make_multi_head(8, 2, rng);
  CHECK(p.d_head() == 4);
  CHECK_THROWS_AS(make_multi_head(8, 3, rng), ContractError);
  const Tensor x = Tensor::constant(random_matrix(5, 8, rng));
  const Tensor mem = Tensor::constant(random_matrix(3, 8, rng));
  CHECK(multi_head_attention(p, x, x, x).value().rows() == 5);
  // Pre-projected memory gives the same result as projecting on the fly.
  const Matrix direct = multi_head_attention(p, x, mem, mem).value();
  const Matrix cached = multi_head_attention(p, x, project_memory(p, mem)).value();
  CHECK((direct - cached).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK_THROWS_AS(multi_head_attention(p, Tensor::constant(Matrix::Zero(2, 7)), mem, mem), DimensionError);
}

TEST_CASE("feed-forward and residual examples") {
  FeedForwardParams ff{Tensor::constant(Matrix::Identity(2, 2)), Tensor::constant(Matrix::Zero(1, 2)),
                       Tensor::constant(Matrix::Identity(2, 2)), Tensor::constant(Matrix::Zero(1, 2))};
  Matrix x(1, 2);
  x << -1, 2;
  const Matrix y = feed_forward(ff, Tensor::constant(x)).value();
  CHECK(y(0, 0) == 0.0);
  CHECK(y(0, 1) == 2.0);

  Matrix b2(1, 2);
  b2 << 0.25, -4;
  FeedForwardParams zero{Tensor::constant(Matrix::Zero(2, 3)), Tensor::constant(Matrix::Zero(1, 3)),
                         Tensor::constant(Matrix::Zero(3, 2)), Tensor::constant(b2)};
  const Matrix z = feed_forward(zero, Tensor::constant(Matrix::Ones(3, 2))).value();
  for (Index i = 0; i < 3; ++i) CHECK(z.row(i) == b2);

  std::mt19937_64 rng(9);
  const LayerNormParams norm = make_layer_norm(4);
  const Tensor in = Tensor::constant(random_matrix(3, 4, rng));
  const Matrix res = residual_norm_block([](const Tensor& t) { return scale(t, 0.0); }, in, norm, ForwardContext{}).value();
  CHECK((res - layer_norm(in, norm.gain, norm.bias).value()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("finite differences: SA -> CA -> FF block") {
  std::mt19937_64 rng(10);
  const MultiHeadParams sa = make_multi_head(8, 2, rng), ca = make_multi_head(8, 2, rng);
  const FeedForwardParams ff = make_feed_forward(8, 16, rng);
  const LayerNormParams n1 = make_layer_norm(8), n2 = make_layer_norm(8), n3 = make_layer_norm(8);
  const InputProjection proj = make_input_projection(5, 8, rng);
  const LayerNormParams pn = make_layer_norm(8);
  const Tensor x = Tensor::parameter(random_matrix(4, 5, rng));
  const Tensor mem = Tensor::parameter(random_matrix(3, 8, rng));
  const Matrix w = random_matrix(4, 8, rng);
  const Matrix mask = causal_mask(4);
  const ForwardContext ctx;
  auto loss = [&] {
    Tensor h = project_input(proj, pn, x);
    h = residual_norm_block([&](const Tensor& t) { return multi_head_attention(sa, t, t, t, &mask); }, h, n1, ctx);
    h = residual_norm_block([&](const Tensor& t) { return multi_head_attention(ca, t, mem, mem); }, h, n2, ctx);
    h = residual_norm_block([&](const Tensor& t) { return feed_forward(ff, t); }, h, n3, ctx);
    return sum(mul(h, Tensor::constant(w)));
  };
  std::vector<Tensor> params{x, mem, sa.w_q, sa.w_k, sa.w_v, sa.w_o, ca.w_q, ca.w_o, ff.w1, ff.b1, ff.w2,
                             ff.b2, n1.gain, n3.bias, proj.w, proj.b, pn.gain};
  CHECK(max_fd_error(loss, params) <= 1e-4);
}

TEST_CASE("training dropout needs an rng") {
  ForwardContext ctx{true, 0.5, nullptr};
  CHECK_THROWS_AS(ctx.drop(Tensor::constant(Matrix::Ones(1, 2))), ContractError);
}

}  // TEST_SUITE
