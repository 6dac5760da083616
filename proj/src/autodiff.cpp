// SPDX-License-Identifier: Apache-2.0

#include "indm/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace indm {

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "(" << t.rows() << ", " << t.cols() << ")";
  return os.str();
}

namespace ad {
namespace {

thread_local bool g_grad_enabled = true;

Value make_result(Tensor data, std::vector<NodePtr> parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->data = std::move(data);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (any) {
      node->requires_grad = true;
      node->is_leaf = false;
      node->parents = std::move(parents);
      node->backward = std::move(fn);
    }
  }
  return Value(std::move(node));
}

Index broadcast_dim(Index a, Index b, const char* op, const Tensor& ta, const Tensor& tb) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(ta) + " and " +
                   shape_str(tb));
}

Tensor broadcast_to(const Tensor& t, Index r, Index c) {
  if (t.rows() == r && t.cols() == c) return t;
  if (t.rows() == 1 && t.cols() == 1) return Tensor::Constant(r, c, t(0, 0));
  if (t.rows() == 1) return t.replicate(r, 1);
  return t.replicate(1, c);
}

// Sums g down to shape (r, c), the inverse of broadcast_to.
void accumulate_reduced(Tensor* dst, const Tensor& g) {
  if (dst == nullptr) return;
  const Index r = dst->rows();
  const Index c = dst->cols();
  if (g.rows() == r && g.cols() == c) {
    *dst += g;
  } else if (r == 1 && c == 1) {
    (*dst)(0, 0) += g.sum();
  } else if (r == 1) {
    *dst += g.colwise().sum();
  } else {
    *dst += g.rowwise().sum();
  }
}

struct Broadcast {
  Index rows;
  Index cols;
};

Broadcast broadcast_shape(const Value& a, const Value& b, const char* op) {
  return {broadcast_dim(a.rows(), b.rows(), op, a.data(), b.data()),
          broadcast_dim(a.cols(), b.cols(), op, a.data(), b.data())};
}

template <class F>
Value unary(const Value& a, Tensor out, F&& grad_of_input) {
  return make_result(std::move(out), {a.node()},
                     [f = std::forward<F>(grad_of_input)](const Node& self, const Tensor& g,
                                                          std::span<Tensor* const> pg) {
                       if (pg[0]) *pg[0] += f(self, g);
                     });
}

// Depth-first topological order (parents before children) of the nodes
// reachable from root that require grad.
std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

std::unordered_map<Node*, Tensor> run_backward(const Value& root, std::vector<Node*>* order_out) {
  if (!root.defined()) throw Error("backward: undefined root");
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward: root must be scalar-shaped, got " + shape_str(root.data()));
  }
  std::unordered_map<Node*, Tensor> grads;
  if (!root.requires_grad()) return grads;
  auto order = topo_order(root.node().get());
  grads.emplace(root.node().get(), Tensor::Ones(1, 1));
  std::vector<Tensor*> pg;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    pg.assign(node->parents.size(), nullptr);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      Node* p = node->parents[i].get();
      if (!p->requires_grad) continue;
      auto [slot, inserted] = grads.try_emplace(p);
      if (inserted) slot->second = Tensor::Zero(p->data.rows(), p->data.cols());
      pg[i] = &slot->second;
    }
    // `found` stays valid: unordered_map references survive rehashing.
    node->backward(*node, found->second, pg);
  }
  if (order_out) *order_out = std::move(order);
  return grads;
}

}  // namespace

Value Value::constant(Tensor data) {
  auto node = std::make_shared<Node>();
  node->data = std::move(data);
  return Value(std::move(node));
}

Value Value::constant(double x) { return constant(Tensor::Constant(1, 1, x)); }

Value Value::variable(Tensor data) {
  auto node = std::make_shared<Node>();
  node->data = std::move(data);
  node->requires_grad = true;
  return Value(std::move(node));
}

double Value::item() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("item: expected 1x1, got " + shape_str(data()));
  return data()(0, 0);
}

Tensor Value::grad() const {
  if (node_->grad.size() == 0) return Tensor::Zero(rows(), cols());
  return node_->grad;
}

void Value::zero_grad() { node_->grad.resize(0, 0); }

void Value::set_data(const Tensor& data) {
  if (data.rows() != rows() || data.cols() != cols()) {
    throw ShapeError("set_data: shape " + shape_str(data) + " does not match " +
                     shape_str(node_->data));
  }
  node_->data = data;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

EnableGradGuard::EnableGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = true; }
EnableGradGuard::~EnableGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Value add(const Value& a, const Value& b) {
  auto s = broadcast_shape(a, b, "add");
  Tensor out = broadcast_to(a.data(), s.rows, s.cols) + broadcast_to(b.data(), s.rows, s.cols);
  return make_result(std::move(out), {a.node(), b.node()},
                     [](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       accumulate_reduced(pg[0], g);
                       accumulate_reduced(pg[1], g);
                     });
}

Value sub(const Value& a, const Value& b) {
  auto s = broadcast_shape(a, b, "sub");
  Tensor out = broadcast_to(a.data(), s.rows, s.cols) - broadcast_to(b.data(), s.rows, s.cols);
  return make_result(std::move(out), {a.node(), b.node()},
                     [](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       accumulate_reduced(pg[0], g);
                       if (pg[1]) accumulate_reduced(pg[1], -g);
                     });
}

Value mul(const Value& a, const Value& b) {
  auto s = broadcast_shape(a, b, "mul");
  Tensor out = (broadcast_to(a.data(), s.rows, s.cols).array() *
                broadcast_to(b.data(), s.rows, s.cols).array())
                   .matrix();
  return make_result(std::move(out), {a.node(), b.node()},
                     [](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
                       const Tensor& ad = self.parents[0]->data;
                       const Tensor& bd = self.parents[1]->data;
                       const Index r = g.rows();
                       const Index c = g.cols();
                       if (pg[0]) {
                         accumulate_reduced(pg[0],
                                            (g.array() * broadcast_to(bd, r, c).array()).matrix());
                       }
                       if (pg[1]) {
                         accumulate_reduced(pg[1],
                                            (g.array() * broadcast_to(ad, r, c).array()).matrix());
                       }
                     });
}

Value div(const Value& a, const Value& b) {
  auto s = broadcast_shape(a, b, "div");
  Tensor out = (broadcast_to(a.data(), s.rows, s.cols).array() /
                broadcast_to(b.data(), s.rows, s.cols).array())
                   .matrix();
  return make_result(std::move(out), {a.node(), b.node()},
                     [](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
                       const Index r = g.rows();
                       const Index c = g.cols();
                       Tensor bb = broadcast_to(self.parents[1]->data, r, c);
                       if (pg[0]) accumulate_reduced(pg[0], (g.array() / bb.array()).matrix());
                       if (pg[1]) {
                         accumulate_reduced(pg[1],
                                            (-g.array() * self.data.array() / bb.array()).matrix());
                       }
                     });
}

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.data()) + " and " +
                     shape_str(b.data()));
  }
  Tensor out = a.data() * b.data();
  return make_result(std::move(out), {a.node(), b.node()},
                     [](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
                       if (pg[0]) pg[0]->noalias() += g * self.parents[1]->data.transpose();
                       if (pg[1]) pg[1]->noalias() += self.parents[0]->data.transpose() * g;
                     });
}

Value neg(const Value& a) {
  return unary(a, -a.data(), [](const Node&, const Tensor& g) -> Tensor { return -g; });
}

Value affine(const Value& a, double scale, double shift) {
  Tensor out = (a.data().array() * scale + shift).matrix();
  return unary(a, std::move(out),
               [scale](const Node&, const Tensor& g) -> Tensor { return g * scale; });
}

Eigen::ArrayXXd tanh_array(const Eigen::ArrayXXd& a) {
  return a.sign() * (2.0 / (1.0 + (-2.0 * a.abs()).exp()) - 1.0);
}

Value tanh(const Value& a) {
  Tensor out = tanh_array(a.data().array()).matrix();
  return unary(a, std::move(out), [](const Node& self, const Tensor& g) -> Tensor {
    return (g.array() * (1.0 - self.data.array().square())).matrix();
  });
}

Value sin(const Value& a) {
  Tensor out = a.data().array().sin().matrix();
  return unary(a, std::move(out), [](const Node& self, const Tensor& g) -> Tensor {
    return (g.array() * self.parents[0]->data.array().cos()).matrix();
  });
}

Value cos(const Value& a) {
  Tensor out = a.data().array().cos().matrix();
  return unary(a, std::move(out), [](const Node& self, const Tensor& g) -> Tensor {
    return (-g.array() * self.parents[0]->data.array().sin()).matrix();
  });
}

Value exp(const Value& a) {
  Tensor out = a.data().array().exp().matrix();
  return unary(a, std::move(out), [](const Node& self, const Tensor& g) -> Tensor {
    return (g.array() * self.data.array()).matrix();
  });
}

Value log(const Value& a) {
  Tensor out = a.data().array().log().matrix();
  return unary(a, std::move(out), [](const Node& self, const Tensor& g) -> Tensor {
    return (g.array() / self.parents[0]->data.array()).matrix();
  });
}

Value square(const Value& a) {
  Tensor out = a.data().array().square().matrix();
  return unary(a, std::move(out), [](const Node& self, const Tensor& g) -> Tensor {
    return (2.0 * g.array() * self.parents[0]->data.array()).matrix();
  });
}

Value sigmoid(const Value& a) { return Value::constant(1.0) / (exp(neg(a)) + 1.0); }

Value swish(const Value& a) { return a * sigmoid(a); }

Value sum(const Value& a) {
  Tensor out = Tensor::Constant(1, 1, a.data().sum());
  return unary(a, std::move(out), [](const Node& self, const Tensor& g) -> Tensor {
    const Tensor& x = self.parents[0]->data;
    return Tensor::Constant(x.rows(), x.cols(), g(0, 0));
  });
}

Value mean(const Value& a) {
  const double n = static_cast<double>(a.data().size());
  return affine(sum(a), 1.0 / n, 0.0);
}

Value row_sum(const Value& a) {
  Tensor out = a.data().rowwise().sum();
  return unary(a, std::move(out), [](const Node& self, const Tensor& g) -> Tensor {
    return g.replicate(1, self.parents[0]->data.cols());
  });
}

Value tile_rows(const Value& a, Index times) {
  if (times < 1) throw ShapeError("tile_rows: times must be positive");
  if (times == 1) return a;
  Tensor out = a.data().replicate(times, 1);
  return make_result(std::move(out), {a.node()},
                     [times](const Node& self, const Tensor& g, std::span<Tensor* const> pg) {
                       if (!pg[0]) return;
                       const Index r = self.parents[0]->data.rows();
                       for (Index k = 0; k < times; ++k) *pg[0] += g.middleRows(k * r, r);
                     });
}

Value gather_cols(const Value& a, std::span<const Index> cols) {
  std::vector<Index> idx(cols.begin(), cols.end());
  Tensor out(a.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= a.cols()) {
      throw ShapeError("gather_cols: column " + std::to_string(idx[j]) + " out of range for " +
                       shape_str(a.data()));
    }
    out.col(static_cast<Index>(j)) = a.data().col(idx[j]);
  }
  return make_result(std::move(out), {a.node()},
                     [idx](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       if (!pg[0]) return;
                       for (std::size_t j = 0; j < idx.size(); ++j) {
                         pg[0]->col(idx[j]) += g.col(static_cast<Index>(j));
                       }
                     });
}

Value concat_cols(const Value& a, const Value& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: row mismatch " + shape_str(a.data()) + " and " +
                     shape_str(b.data()));
  }
  Tensor out(a.rows(), a.cols() + b.cols());
  out << a.data(), b.data();
  const Index ca = a.cols();
  return make_result(std::move(out), {a.node(), b.node()},
                     [ca](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       if (pg[0]) *pg[0] += g.leftCols(ca);
                       if (pg[1]) *pg[1] += g.rightCols(g.cols() - ca);
                     });
}

Value interleave_cols(const Value& a, std::span<const Index> cols_a, const Value& b,
                      std::span<const Index> cols_b) {
  if (a.rows() != b.rows() || a.cols() != static_cast<Index>(cols_a.size()) ||
      b.cols() != static_cast<Index>(cols_b.size())) {
    throw ShapeError("interleave_cols: shapes " + shape_str(a.data()) + " and " +
                     shape_str(b.data()) + " do not match the column maps");
  }
  std::vector<Index> ia(cols_a.begin(), cols_a.end());
  std::vector<Index> ib(cols_b.begin(), cols_b.end());
  const Index width = static_cast<Index>(ia.size() + ib.size());
  Tensor out(a.rows(), width);
  for (std::size_t j = 0; j < ia.size(); ++j) out.col(ia[j]) = a.data().col(static_cast<Index>(j));
  for (std::size_t j = 0; j < ib.size(); ++j) out.col(ib[j]) = b.data().col(static_cast<Index>(j));
  return make_result(std::move(out), {a.node(), b.node()},
                     [ia, ib](const Node&, const Tensor& g, std::span<Tensor* const> pg) {
                       if (pg[0]) {
                         for (std::size_t j = 0; j < ia.size(); ++j) {
                           pg[0]->col(static_cast<Index>(j)) += g.col(ia[j]);
                         }
                       }
                       if (pg[1]) {
                         for (std::size_t j = 0; j < ib.size(); ++j) {
                           pg[1]->col(static_cast<Index>(j)) += g.col(ib[j]);
                         }
                       }
                     });
}

Value operator+(const Value& a, const Value& b) { return add(a, b); }
Value operator-(const Value& a, const Value& b) { return sub(a, b); }
Value operator*(const Value& a, const Value& b) { return mul(a, b); }
Value operator/(const Value& a, const Value& b) { return div(a, b); }
Value operator-(const Value& a) { return neg(a); }
Value operator+(const Value& a, double c) { return affine(a, 1.0, c); }
Value operator+(double c, const Value& a) { return affine(a, 1.0, c); }
Value operator-(const Value& a, double c) { return affine(a, 1.0, -c); }
Value operator-(double c, const Value& a) { return affine(a, -1.0, c); }
Value operator*(const Value& a, double c) { return affine(a, c, 0.0); }
Value operator*(double c, const Value& a) { return affine(a, c, 0.0); }
Value operator/(const Value& a, double c) { return affine(a, 1.0 / c, 0.0); }

void backward(const Value& root) {
  std::vector<Node*> order;
  auto grads = run_backward(root, &order);
  for (Node* node : order) {
    if (!node->is_leaf) continue;
    auto it = grads.find(node);
    if (it == grads.end()) continue;
    if (node->grad.size() == 0) {
      node->grad = std::move(it->second);
    } else {
      node->grad += it->second;
    }
  }
}

std::vector<Tensor> grad(const Value& root, std::span<const Value> wrt) {
  auto grads = run_backward(root, nullptr);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    auto it = grads.find(v.node().get());
    if (it == grads.end()) {
      out.push_back(Tensor::Zero(v.rows(), v.cols()));
    } else {
      out.push_back(it->second);
    }
  }
  return out;
}

}  // namespace ad
}  // namespace indm
