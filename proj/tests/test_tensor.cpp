#include <cmath>
#include <random>

#include "doctest.h"
#include "pta/tensor.hpp"
#include "support.hpp"

using namespace pta;
using pta::test::max_fd_error;
using pta::test::random_matrix;

namespace {

Matrix m(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (auto row : rows) {
    Index c = 0;
    for (double v : row) out(r, c++) = v;
    ++r;
  }
  return out;
}

// Plain triple loop, independent of Eigen's product kernels.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul examples") {
  const Matrix x = m({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::constant(Matrix::Identity(2, 2)), Tensor::constant(x)).value() == x);
  CHECK(matmul(Tensor::constant(m({{1, 2, 3}})), Tensor::constant(m({{1}, {1}, {1}}))).value()(0, 0) == 6.0);
  std::mt19937_64 rng(1);
  const Matrix z = matmul(Tensor::constant(Matrix::Zero(2, 3)), Tensor::constant(random_matrix(3, 4, rng))).value();
  CHECK(z.rows() == 2);
  CHECK(z.cols() == 4);
  CHECK(z.isZero(0.0));
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(1 + t % 4, 2 + t % 3, rng);
    const Matrix b = random_matrix(a.cols(), 1 + t % 5, rng);
    CHECK((matmul(Tensor::constant(a), Tensor::constant(b)).value() - naive_matmul(a, b)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((matmul_nt(Tensor::constant(a), Tensor::constant(b.transpose())).value() - naive_matmul(a, b)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("shape mismatch names both shapes") {
  try {
    matmul(Tensor::constant(Matrix::Zero(2, 3)), Tensor::constant(Matrix::Zero(2, 3)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(add(Tensor::constant(Matrix::Zero(2, 3)), Tensor::constant(Matrix::Zero(3, 2))), DimensionError);
}

TEST_CASE("softmax examples") {
  const Matrix a = softmax(Tensor::constant(m({{0, 0}}))).value();
  CHECK(a(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  const Matrix b = softmax(Tensor::constant(m({{0, std::log(3.0)}}))).value();
  CHECK(b(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(b(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
  // Large logits must not overflow.
  const Matrix c = softmax(Tensor::constant(m({{1000, 1000}}))).value();
  CHECK(c(0, 1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(softmax(Tensor::constant(m({{0, NAN}}))), NumericError);
  CHECK_THROWS_AS(softmax(Tensor::constant(m({{0, INFINITY}}))), NumericError);
  const Matrix cols = softmax(Tensor::constant(m({{0, 1}, {0, 1}})), 0).value();
  CHECK(cols(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("layer_norm examples") {
  const Tensor g = Tensor::constant(Matrix::Ones(1, 3)), b = Tensor::constant(Matrix::Zero(1, 3));
  CHECK(layer_norm(Tensor::constant(m({{1, 1, 1}})), g, b).value().isZero(1e-12));
  const Matrix y = layer_norm(Tensor::constant(m({{-1, 1}})), Tensor::constant(Matrix::Ones(1, 2)),
                              Tensor::constant(Matrix::Zero(1, 2)), 1e-12).value();
  CHECK(y(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(y(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
  const Matrix bias = m({{0.5, -2, 3}});
  const Matrix z = layer_norm(Tensor::constant(m({{4, -1, 7}, {0, 2, 9}})), Tensor::constant(Matrix::Zero(1, 3)),
                              Tensor::constant(bias)).value();
  CHECK(z.row(0) == bias);
  CHECK(z.row(1) == bias);
}

TEST_CASE("elementwise and structural ops") {
  CHECK(relu(Tensor::constant(m({{-2, 3}}))).value() == m({{0, 3}}));
  const Tensor a = Tensor::constant(m({{1, 2}})), b = Tensor::constant(m({{3}}));
  CHECK(concat(a, b).value() == m({{1, 2, 3}}));
  CHECK(concat(a, a, 0).value().rows() == 2);
  const Tensor table = Tensor::constant(m({{1, 2}, {3, 4}}));
  const std::vector<int> ids{0, 0};
  const Matrix e = embedding_lookup(ids, table).value();
  CHECK(e.row(0) == e.row(1));
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(embedding_lookup(bad, table), IndexError);
  const std::vector<int> negative{-1};
  CHECK_THROWS_AS(embedding_lookup(negative, table), IndexError);
  CHECK_THROWS_AS(slice_rows(table, 1, 2), IndexError);
}

TEST_CASE("cross_entropy examples") {
  CHECK(cross_entropy(Tensor::constant(Matrix::Zero(1, 6)), 3).item() == doctest::Approx(std::log(6.0)).epsilon(1e-12));
  CHECK(cross_entropy(Tensor::constant(m({{0, std::log(3.0)}})), 0).item() == doctest::Approx(-std::log(0.25)).epsilon(1e-12));
  CHECK(cross_entropy(Tensor::constant(m({{200, 0, 0}})), 0).item() < 1e-80);
  CHECK_THROWS_AS(cross_entropy(Tensor::constant(Matrix::Zero(1, 6)), 6), IndexError);
  CHECK_THROWS_AS(cross_entropy(Tensor::constant(Matrix::Zero(1, 6)), -1), IndexError);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(3);
  const Tensor x = Tensor::constant(random_matrix(4, 5, rng));
  CHECK(dropout(x, 0.0, true, rng).value() == x.value());
  CHECK(dropout(x, 0.7, false, rng).value() == x.value());
  const Tensor ones = Tensor::constant(Matrix::Ones(1, 100000));
  const Matrix y = dropout(ones, 0.5, true, rng).value();
  const double survivors = static_cast<double>((y.array() != 0.0).count()) / 1e5;
  CHECK(survivors == doctest::Approx(0.5).epsilon(0.02));
  // Inverted scaling keeps the expectation.
  CHECK(y.mean() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(((y.array() == 0.0) || (y.array() == 2.0)).all());
  CHECK_THROWS_AS(dropout(ones, 1.0, true, rng), ContractError);
}

TEST_CASE("backward examples") {
  std::mt19937_64 rng(5);
  Tensor x = Tensor::parameter(random_matrix(1, 4, rng));
  backward(sum(mul(x, x)));
  CHECK((x.grad() - 2.0 * x.value()).cwiseAbs().maxCoeff() < 1e-14);

  // A leaf used twice: d/dx (x + x) = 2.
  Tensor y = Tensor::parameter(Matrix::Constant(1, 1, 3.0));
  backward(add(y, y));
  CHECK(y.grad()(0, 0) == 2.0);

  // Gradients accumulate until zeroed.
  backward(add(y, y));
  CHECK(y.grad()(0, 0) == 4.0);
  y.zero_grad();
  CHECK(y.grad()(0, 0) == 0.0);

  CHECK_THROWS_AS(backward(x), ContractError);
  CHECK_THROWS_AS(backward(Tensor::constant(Matrix::Ones(1, 1))), ContractError);
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x = Tensor::parameter(Matrix::Ones(2, 2));
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = matmul(x, x);
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("parents precede children in sequence") {
  Tensor a = Tensor::parameter(Matrix::Ones(1, 1));
  Tensor b = scale(a, 2.0);
  Tensor c = add(a, b);
  CHECK(a.node()->sequence < b.node()->sequence);
  CHECK(b.node()->sequence < c.node()->sequence);
}

TEST_CASE("finite differences: every op") {
  std::mt19937_64 rng(11);
  auto P = [&](Index r, Index c) { return Tensor::parameter(random_matrix(r, c, rng)); };
  const Tensor a = P(3, 4), b = P(4, 2), c = P(3, 4), row = P(1, 4), g = P(1, 4), bias = P(1, 4);
  const Matrix w = random_matrix(3, 2, rng);
  const Matrix w4 = random_matrix(3, 4, rng);
  std::mt19937_64 wr(99);
  const Matrix w1 = random_matrix(3, 3, wr), w2 = random_matrix(2, 4, wr), w3 = random_matrix(3, 8, wr),
               w4b = random_matrix(6, 4, wr), w5 = random_matrix(2, 4, wr), w6 = random_matrix(3, 2, wr),
               w7 = random_matrix(3, 4, wr);
  auto weighted = [](const Tensor& t, const Matrix& wt) { return sum(mul(t, Tensor::constant(wt))); };

  CHECK(max_fd_error([&] { return weighted(matmul(a, b), w); }, {a, b}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(matmul_nt(a, c), w1); }, {a, c}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(transpose(b), w2); }, {b}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(add(a, c), w4); }, {a, c}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(sub(a, c), w4); }, {a, c}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(add_row(a, row), w4); }, {a, row}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(mul(a, c), w4); }, {a, c}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(scale(a, -1.7), w4); }, {a}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(relu(a), w4); }, {a}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(softmax(a, 1), w4); }, {a}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(softmax(a, 0), w4); }, {a}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(layer_norm(a, g, bias), w4); }, {a, g, bias}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(concat(a, c), w3); }, {a, c}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(concat(a, c, 0), w4b); }, {a, c}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(slice_rows(a, 1, 2), w5); }, {a}) < 1e-6);
  CHECK(max_fd_error([&] { return weighted(slice_cols(a, 1, 2), w6); }, {a}) < 1e-6);
  const std::vector<int> ids{2, 0, 2};
  CHECK(max_fd_error([&] { return weighted(embedding_lookup(ids, a), w7); }, {a}) < 1e-6);
  CHECK(max_fd_error([&] { return cross_entropy(row, 2); }, {row}) < 1e-6);
  CHECK(max_fd_error([&] { return sum(a); }, {a}) < 1e-6);
}

TEST_CASE("finite differences: matmul chain") {
  std::mt19937_64 rng(13);
  const Tensor a = Tensor::parameter(random_matrix(2, 3, rng));
  const Tensor b = Tensor::parameter(random_matrix(3, 3, rng));
  const Tensor c = Tensor::parameter(random_matrix(3, 2, rng));
  CHECK(max_fd_error([&] { return sum(relu(matmul(matmul(a, b), c))); }, {a, b, c}) <= 1e-4);
}

}  // TEST_SUITE
