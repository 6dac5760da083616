// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense row-major f64 matrices.
//
// A Value is a handle to a graph node. Operations on Values record their
// parents and a backward closure; the graph lives exactly as long as the
// Values that reference it, so an expression's tape is released when the
// loss Value goes out of scope. Leaves created with Value::variable (and
// Parameters) accumulate gradients across backward() calls.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace indm {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Raised when a computation produces NaN/Inf or a solver fails to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

std::string shape_str(const Tensor& t);

namespace ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Adds the contribution of `g` (shaped like self.data) into the gradient
/// buffers of self.parents. A null buffer means that parent needs no gradient.
using BackwardFn =
    std::function<void(const Node& self, const Tensor& g, std::span<Tensor* const> parent_grads)>;

struct Node {
  Tensor data;
  Tensor grad;  // accumulated gradient, leaves only
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<NodePtr> parents;
  BackwardFn backward;
};

class Value {
 public:
  Value() = default;
  explicit Value(NodePtr node) : node_(std::move(node)) {}

  static Value constant(Tensor data);
  static Value constant(double x);
  /// Leaf that receives gradients.
  static Value variable(Tensor data);

  bool defined() const { return node_ != nullptr; }
  const Tensor& data() const { return node_->data; }
  Index rows() const { return node_->data.rows(); }
  Index cols() const { return node_->data.cols(); }
  double item() const;
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }

  /// Accumulated gradient of a leaf; zeros when nothing has been accumulated.
  Tensor grad() const;
  void zero_grad();
  /// Replaces a leaf's data in place (optimizer updates, checkpoint loading).
  void set_data(const Tensor& data);
  Tensor& mutable_data() { return node_->data; }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Forces tape recording on for its lifetime, e.g. to take Jacobians inside
/// an otherwise gradient-free evaluation.
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Elementwise tanh through the vectorized exp, within about 2e-16 absolute.
/// Eigen's double tanh falls back to a scalar loop.
Eigen::ArrayXXd tanh_array(const Eigen::ArrayXXd& a);

// Elementwise binary ops broadcast when a dimension is 1 on either side.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value matmul(const Value& a, const Value& b);

Value neg(const Value& a);
/// scale * a + shift with constant scalars.
Value affine(const Value& a, double scale, double shift);
Value tanh(const Value& a);
Value sin(const Value& a);
Value cos(const Value& a);
Value exp(const Value& a);
Value log(const Value& a);
Value square(const Value& a);
Value sigmoid(const Value& a);
/// x * sigmoid(x), composed from primitives.
Value swish(const Value& a);

/// Sum of all entries, 1x1.
Value sum(const Value& a);
/// Mean of all entries, 1x1.
Value mean(const Value& a);
/// Per-row sum, n x 1.
Value row_sum(const Value& a);

/// Stacks `times` copies of a vertically.
Value tile_rows(const Value& a, Index times);
Value gather_cols(const Value& a, std::span<const Index> cols);
Value concat_cols(const Value& a, const Value& b);
/// Places the columns of `a` at positions `cols_a` and those of `b` at
/// `cols_b` in an output of width cols_a.size() + cols_b.size().
Value interleave_cols(const Value& a, std::span<const Index> cols_a, const Value& b,
                      std::span<const Index> cols_b);

Value operator+(const Value& a, const Value& b);
Value operator-(const Value& a, const Value& b);
Value operator*(const Value& a, const Value& b);
Value operator/(const Value& a, const Value& b);
Value operator-(const Value& a);
Value operator+(const Value& a, double c);
Value operator+(double c, const Value& a);
Value operator-(const Value& a, double c);
Value operator-(double c, const Value& a);
Value operator*(const Value& a, double c);
Value operator*(double c, const Value& a);
Value operator/(const Value& a, double c);

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
/// Root must be 1x1. The graph is left intact so backward may be repeated.
void backward(const Value& root);

/// Gradients of a 1x1 root w.r.t. the given nodes without touching any
/// leaf's accumulated gradient. Unreached nodes get zeros.
std::vector<Tensor> grad(const Value& root, std::span<const Value> wrt);

}  // namespace ad
}  // namespace indm
