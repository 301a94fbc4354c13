#include "pta/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace pta {

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << "[" << m.rows() << "x" << m.cols() << "]";
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

void require_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw NumericError(std::string(op) + ": non-finite input");
}

}  // namespace

void detail::Node::accumulate(const Matrix& delta) {
  if (grad.size() == 0) {
    grad = delta;
  } else {
    grad += delta;
  }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor Tensor::constant(Matrix value) {
  auto node = std::make_shared<detail::Node>();
  node->value = std::move(value);
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
  Tensor t = constant(std::move(value));
  t.node_->requires_grad = true;
  return t;
}

Matrix& Tensor::mutable_value() {
  if (!node_->is_leaf) throw ContractError("mutable_value: tensor is not a leaf");
  return node_->value;
}

std::string Tensor::shape_string() const { return shape_of(node_->value); }

const Matrix& Tensor::grad() const {
  if (node_->grad.size() == 0) {
    node_->grad = Matrix::Zero(rows(), cols());
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_->grad.size() != 0) node_->grad.setZero();
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw ContractError("item: tensor is " + shape_string());
  return node_->value(0, 0);
}

Tensor Tensor::from_op(Matrix value, std::vector<Tensor> parents,
                       std::function<void(const Matrix&)> backward) {
  Tensor out = constant(std::move(value));
  if (!t_grad_enabled) return out;
  bool any = std::any_of(parents.begin(), parents.end(),
                         [](const Tensor& p) { return p.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node_;
  node.requires_grad = true;
  node.is_leaf = false;
  node.parents.reserve(parents.size());
  for (auto& p : parents) node.parents.push_back(p.node_);
  node.backward_fn = std::move(backward);
  return out;
}

void Tensor::accumulate_into(const Tensor& target, const Matrix& delta) {
  if (target.requires_grad()) target.node_->accumulate(delta);
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward: loss must be a scalar, got " +
                        (loss.defined() ? loss.shape_string() : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw ContractError("backward: loss is not on the graph");

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->sequence > b->sequence; });

  for (auto* n : order) {
    if (!n->is_leaf) n->grad.resize(0, 0);
  }
  loss.node()->grad = Matrix::Ones(1, 1);
  for (auto* n : order) {
    if (n->is_leaf || n->grad.size() == 0 || !n->backward_fn) continue;
    n->backward_fn(n->grad);
  }
  // Interior gradients are only needed during the pass.
  for (auto* n : order) {
    if (!n->is_leaf) n->grad.resize(0, 0);
  }
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + a.shape_string() + " * " +
                         b.shape_string());
  }
  Matrix out = a.value() * b.value();
  return Tensor::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) Tensor::accumulate_into(a, g * b.value().transpose());
    if (b.requires_grad()) Tensor::accumulate_into(b, a.value().transpose() * g);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + a.shape_string() + " * " +
                         b.shape_string() + "^T");
  }
  Matrix out = a.value() * b.value().transpose();
  return Tensor::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) Tensor::accumulate_into(a, g * b.value());
    if (b.requires_grad()) Tensor::accumulate_into(b, g.transpose() * a.value());
  });
}

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return Tensor::from_op(std::move(out), {a}, [a](const Matrix& g) {
    Tensor::accumulate_into(a, g.transpose());
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return Tensor::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    Tensor::accumulate_into(a, g);
    Tensor::accumulate_into(b, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return Tensor::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    Tensor::accumulate_into(a, g);
    if (b.requires_grad()) Tensor::accumulate_into(b, -g);
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: cannot broadcast " + row.shape_string() + " over " +
                         a.shape_string());
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return Tensor::from_op(std::move(out), {a, row}, [a, row](const Matrix& g) {
    Tensor::accumulate_into(a, g);
    if (row.requires_grad()) Tensor::accumulate_into(row, g.colwise().sum());
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return Tensor::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) Tensor::accumulate_into(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) Tensor::accumulate_into(b, g.cwiseProduct(a.value()));
  });
}

Tensor scale(const Tensor& a, double factor) {
  Matrix out = a.value() * factor;
  return Tensor::from_op(std::move(out), {a}, [a, factor](const Matrix& g) {
    Tensor::accumulate_into(a, g * factor);
  });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return Tensor::from_op(std::move(out), {a}, [a](const Matrix& g) {
    Matrix mask = (a.value().array() > 0.0).cast<double>().matrix();
    Tensor::accumulate_into(a, g.cwiseProduct(mask));
  });
}

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::from_op(std::move(out), {a}, [a](const Matrix& g) {
    Tensor::accumulate_into(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis != 0 && axis != 1) throw ContractError("softmax: axis must be 0 or 1");
  require_finite(x.value(), "softmax");
  Matrix y = axis == 1 ? softmax_rows(x.value())
                       : Matrix(softmax_rows(x.value().transpose()).transpose());
  Matrix cached = y;
  return Tensor::from_op(std::move(y), {x}, [x, cached, axis](const Matrix& g) {
    // dx = y * (g - <g, y>) per normalized slice.
    Matrix gy = g.cwiseProduct(cached);
    Matrix dx(cached.rows(), cached.cols());
    if (axis == 1) {
      Eigen::VectorXd dots = gy.rowwise().sum();
      dx = gy - (cached.array().colwise() * dots.array()).matrix();
    } else {
      RowVector dots = gy.colwise().sum();
      dx = gy - (cached.array().rowwise() * dots.array()).matrix();
    }
    Tensor::accumulate_into(x, dx);
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw DimensionError("layer_norm: affine " + gain.shape_string() + "/" + bias.shape_string() +
                         " does not match " + x.shape_string());
  }
  Matrix xhat(x.rows(), n);
  Eigen::VectorXd inv_std(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mean = x.value().row(r).mean();
    RowVector centered = x.value().row(r).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(n);
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = centered * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return Tensor::from_op(
      std::move(out), {x, gain, bias}, [x, gain, bias, xhat, inv_std, n](const Matrix& g) {
        if (gain.requires_grad()) {
          Tensor::accumulate_into(gain, g.cwiseProduct(xhat).colwise().sum());
        }
        if (bias.requires_grad()) Tensor::accumulate_into(bias, g.colwise().sum());
        if (x.requires_grad()) {
          Matrix gh = (g.array().rowwise() * gain.value().row(0).array()).matrix();
          Matrix dx(g.rows(), n);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (Index r = 0; r < g.rows(); ++r) {
            const double mean_g = gh.row(r).sum() * inv_n;
            const double mean_gx = gh.row(r).dot(xhat.row(r)) * inv_n;
            dx.row(r) = inv_std(r) *
                        (gh.row(r).array() - mean_g - xhat.row(r).array() * mean_gx).matrix();
          }
          Tensor::accumulate_into(x, dx);
        }
      });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ContractError("concat: axis must be 0 or 1");
  Index rows = 0, cols = 0;
  for (const auto& p : parts) {
    if (axis == 1) {
      if (p.rows() != parts[0].rows()) {
        throw DimensionError("concat: row counts differ " + parts[0].shape_string() + " vs " +
                             p.shape_string());
      }
      cols += p.cols();
    } else {
      if (p.cols() != parts[0].cols()) {
        throw DimensionError("concat: column counts differ " + parts[0].shape_string() +
                             " vs " + p.shape_string());
      }
      rows += p.rows();
    }
  }
  if (axis == 1) rows = parts[0].rows();
  else cols = parts[0].cols();

  Matrix out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    if (axis == 1) {
      out.middleCols(offset, p.cols()) = p.value();
      offset += p.cols();
    } else {
      out.middleRows(offset, p.rows()) = p.value();
      offset += p.rows();
    }
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return Tensor::from_op(std::move(out), parents, [parents, axis](const Matrix& g) {
    Index off = 0;
    for (const auto& p : parents) {
      if (axis == 1) {
        if (p.requires_grad()) Tensor::accumulate_into(p, g.middleCols(off, p.cols()));
        off += p.cols();
      } else {
        if (p.requires_grad()) Tensor::accumulate_into(p, g.middleRows(off, p.rows()));
        off += p.rows();
      }
    }
  });
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  const Tensor parts[] = {a, b};
  return concat(std::span<const Tensor>(parts), axis);
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw IndexError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of " + a.shape_string());
  }
  Matrix out = a.value().middleRows(start, count);
  return Tensor::from_op(std::move(out), {a}, [a, start, count](const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = g;
    Tensor::accumulate_into(a, full);
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw IndexError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                     ") out of " + a.shape_string());
  }
  Matrix out = a.value().middleCols(start, count);
  return Tensor::from_op(std::move(out), {a}, [a, start, count](const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    Tensor::accumulate_into(a, full);
  });
}

Tensor embedding_lookup(std::span<const int> ids, const Tensor& table) {
  Matrix out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(table.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> kept(ids.begin(), ids.end());
  return Tensor::from_op(std::move(out), {table}, [table, kept](const Matrix& g) {
    Matrix full = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < kept.size(); ++i) full.row(kept[i]) += g.row(static_cast<Index>(i));
    Tensor::accumulate_into(table, full);
  });
}

Tensor cross_entropy(const Tensor& logits, int target) {
  if (logits.rows() != 1) throw DimensionError("cross_entropy: logits must be a row, got " +
                                               logits.shape_string());
  if (target < 0 || target >= logits.cols()) {
    throw IndexError("cross_entropy: target " + std::to_string(target) + " outside " +
                     std::to_string(logits.cols()) + " classes");
  }
  require_finite(logits.value(), "cross_entropy");
  const auto& z = logits.value();
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = lse - z(0, target);
  return Tensor::from_op(std::move(out), {logits}, [logits, target, lse](const Matrix& g) {
    Matrix d = (logits.value().array() - lse).exp().matrix();
    d(0, target) -= 1.0;
    Tensor::accumulate_into(logits, d * g(0, 0));
  });
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: p must lie in [0, 1)");
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double factor = 1.0 / (1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? factor : 0.0;
  Matrix out = x.value().cwiseProduct(mask);
  return Tensor::from_op(std::move(out), {x}, [x, mask](const Matrix& g) {
    Tensor::accumulate_into(x, g.cwiseProduct(mask));
  });
}

}  // namespace pta
