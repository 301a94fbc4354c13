#pragma once

// Dense 2-D tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a graph node. Every differentiable op
// records its parents and a backward closure; `backward(loss)` walks the
// reachable nodes in reverse creation order, so parents are always visited
// after their children. Values are row-major 64-bit floats.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pta/errors.hpp"

namespace pta {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // empty until the node takes part in a backward pass
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t sequence = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives this node's gradient and accumulates into the parents.
  std::function<void(const Matrix&)> backward_fn;

  void accumulate(const Matrix& delta);
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value);
  /// Leaf that collects gradients.
  static Tensor parameter(Matrix value);

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  /// Mutable access for optimizers and initializers; leaves only.
  Matrix& mutable_value();

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  std::string shape_string() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  /// Gradient buffer; zeros of the value's shape when nothing accumulated yet.
  const Matrix& grad() const;
  void zero_grad();

  /// Scalar value of a 1x1 tensor.
  double item() const;

  /// Builds an op result. `backward` receives the output gradient and must
  /// call `Tensor::accumulate_into` on the parents that need it.
  static Tensor from_op(Matrix value, std::vector<Tensor> parents,
                        std::function<void(const Matrix&)> backward);
  /// Adds `delta` to the gradient of `target` (used inside backward closures).
  static void accumulate_into(const Tensor& target, const Matrix& delta);

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend void backward(const Tensor& loss);
};

/// RAII guard that disables graph recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Reverse-mode pass from a scalar loss. Gradients accumulate additively on
/// leaves; callers zero them between optimizer steps.
void backward(const Tensor& loss);

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Adds a 1 x cols row to every row of `a`.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor sum(const Tensor& a);

/// axis 1 normalizes each row, axis 0 each column.
Tensor softmax(const Tensor& x, int axis = 1);
/// Row-wise layer normalization; `gain` and `bias` are 1 x cols.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// axis 1 joins columns (widths add), axis 0 stacks rows.
Tensor concat(std::span<const Tensor> parts, int axis = 1);
Tensor concat(const Tensor& a, const Tensor& b, int axis = 1);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor slice_cols(const Tensor& a, Index start, Index count);

/// Gathers rows of `table`; the indices themselves carry no gradient.
Tensor embedding_lookup(std::span<const int> ids, const Tensor& table);

/// -log softmax(logits)[target] for a 1 x n row of logits.
Tensor cross_entropy(const Tensor& logits, int target);

/// Inverted dropout: survivors are scaled by 1/(1-p) at train time.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);

// ---- plain helpers ---------------------------------------------------------

/// Row-wise softmax on a plain matrix (no graph).
Matrix softmax_rows(const Matrix& x);

}  // namespace pta
