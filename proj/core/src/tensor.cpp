// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "ptune/error.hpp"
#include "ptune/kernels.hpp"

namespace ptune::ag {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
}

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> new_node(Shape shape, const char* op) {
  auto n = std::make_shared<Node<T>>();
  n->data.assign(shape_size(shape), T(0));
  n->shape = std::move(shape);
  n->op = op;
  return n;
}

template <typename T>
void check_finite(const Node<T>& n) {
  for (const T v : n.data) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by op '" + n.op + "'");
    }
  }
}

// Finalizes an op result: verifies values and, when any parent needs
// gradients, wires the parents and the adjoint.
template <typename T>
Tensor<T> finish(NodePtr<T> out, std::vector<NodePtr<T>> parents,
                 std::function<void()> adjoint) {
  check_finite(*out);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const NodePtr<T>& p) { return p->requires_grad; });
  if (needs) {
    out->requires_grad = true;
    out->parents = std::move(parents);
    out->backward = std::move(adjoint);
  }
  return Tensor<T>(std::move(out));
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a rank-2 tensor, got " +
                     shape_string(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

// Elementwise unary op with derivative expressed through input and output.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, const char* name, F f, D dfdx) {
  auto out = new_node<T>(x.shape(), name);
  const auto& xd = x.node()->data;
  for (std::size_t i = 0; i < xd.size(); ++i) out->data[i] = f(xd[i]);
  Node<T>* o = out.get();
  Node<T>* xn = x.node().get();
  return finish<T>(out, {x.node()}, [o, xn, dfdx] {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * dfdx(xn->data[i], o->data[i]);
  });
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor() : node_(std::make_shared<Node<T>>()) {
  node_->shape = {1};
  node_->data.assign(1, T(0));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  validate_shape(shape);
  auto n = new_node<T>(std::move(shape), "leaf");
  std::fill(n->data.begin(), n->data.end(), value);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  validate_shape(shape);
  if (values.size() != shape_size(shape)) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_string(shape));
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->data = std::move(values);
  n->requires_grad = requires_grad;
  check_finite(*n);
  return Tensor(n);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  return rank() == 1 ? 1 : node_->shape[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return node_->shape.back();
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() requires a single-element tensor");
  return node_->data[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  if (!node_->is_leaf()) throw Error("set_requires_grad is only valid on leaf tensors");
  node_->requires_grad = on;
  if (!on) {
    node_->grad.clear();
    node_->grad.shrink_to_fit();
  }
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return clone(false);
}

template <typename T>
Tensor<T> Tensor<T>::clone(bool requires_grad) const {
  auto n = std::make_shared<Node<T>>();
  n->shape = node_->shape;
  n->data = node_->data;
  n->requires_grad = requires_grad;
  return Tensor(n);
}

// ---- backward --------------------------------------------------------------

template <typename T>
void backward(Tensor<T>& loss) {
  auto root = loss.node();
  if (root->data.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got " + shape_string(root->shape));
  }
  if (root->consumed) {
    throw Error("backward called twice on the same graph; re-run the forward pass");
  }
  if (!root->requires_grad) {
    root->consumed = true;
    return;
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
  for (Node<T>* n : order) {
    if (n->is_leaf()) continue;
    n->backward = nullptr;
    n->parents.clear();
    if (n != root.get()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
  root->consumed = true;
}

// ---- ops -------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " * " +
                     shape_string(b.shape()));
  }
  auto out = new_node<T>({m, n}, "matmul");
  kernels::gemm_nn(a.node()->data.data(), b.node()->data.data(), out->data.data(), m, k, n);
  Node<T>* o = out.get();
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>(out, {a.node(), b.node()}, [o, an, bn, m, k, n] {
    if (an->requires_grad) {
      // dA = G * B^T, with B^T materialized so the inner loop streams rows.
      std::vector<T> bt(n * k);
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bn->data[p * n + j];
      }
      kernels::gemm_nn(o->grad.data(), bt.data(), an->grad_buffer().data(), m, n, k);
    }
    if (bn->requires_grad) {
      // dB = A^T * G
      kernels::gemm_tn(an->data.data(), o->grad.data(), bn->grad_buffer().data(), m, k, n);
    }
  });
}

template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw ShapeError("matmul_bt: inner dimensions differ " + shape_string(a.shape()) +
                     " * " + shape_string(b.shape()) + "^T");
  }
  auto out = new_node<T>({m, n}, "matmul_bt");
  kernels::gemm_nt(a.node()->data.data(), b.node()->data.data(), out->data.data(), m, k, n);
  Node<T>* o = out.get();
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>(out, {a.node(), b.node()}, [o, an, bn, m, k, n] {
    if (an->requires_grad) {
      // dA = G * B
      kernels::gemm_nn(o->grad.data(), bn->data.data(), an->grad_buffer().data(), m, n, k);
    }
    if (bn->requires_grad) {
      // dB = G^T * A
      kernels::gemm_tn(o->grad.data(), an->data.data(), bn->grad_buffer().data(), m, n, k);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto out = new_node<T>(a.shape(), "add");
  const auto& ad = a.node()->data;
  const auto& bd = b.node()->data;
  for (std::size_t i = 0; i < ad.size(); ++i) out->data[i] = ad[i] + bd[i];
  Node<T>* o = out.get();
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>(out, {a.node(), b.node()}, [o, an, bn] {
    for (Node<T>* p : {an, bn}) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  auto out = new_node<T>(a.shape(), "sub");
  const auto& ad = a.node()->data;
  const auto& bd = b.node()->data;
  for (std::size_t i = 0; i < ad.size(); ++i) out->data[i] = ad[i] - bd[i];
  Node<T>* o = out.get();
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>(out, {a.node(), b.node()}, [o, an, bn] {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto out = new_node<T>(a.shape(), "mul");
  const auto& ad = a.node()->data;
  const auto& bd = b.node()->data;
  for (std::size_t i = 0; i < ad.size(); ++i) out->data[i] = ad[i] * bd[i];
  Node<T>* o = out.get();
  Node<T>* an = a.node().get();
  Node<T>* bn = b.node().get();
  return finish<T>(out, {a.node(), b.node()}, [o, an, bn] {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * an->data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>(
      a, "scale", [factor](T x) { return x * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t c = x.cols();
  if (bias.size() != c) {
    throw ShapeError("add_bias: bias of size " + std::to_string(bias.size()) +
                     " for rows of width " + std::to_string(c));
  }
  const std::size_t r = x.size() / c;
  auto out = new_node<T>(x.shape(), "add_bias");
  out->data = x.node()->data;
  for (std::size_t i = 0; i < r; ++i) {
    kernels::add_bias_row(bias.node()->data.data(), out->data.data() + i * c, c);
  }
  Node<T>* o = out.get();
  Node<T>* xn = x.node().get();
  Node<T>* bn = bias.node().get();
  return finish<T>(out, {x.node(), bias.node()}, [o, xn, bn, r, c] {
    if (xn->requires_grad) {
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < r; ++i) kernels::axpy(T(1), o->grad.data() + i * c, g.data(), c);
    }
  });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      x, "sigmoid", [](T v) { return kernels::sigmoid(v); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  return unary<T>(
      x, "gelu", [](T v) { return kernels::gelu(v); },
      [](T v, T) { return kernels::gelu_grad(v); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto out = new_node<T>({1}, "sum");
  T s = 0;
  for (const T v : x.node()->data) s += v;
  out->data[0] = s;
  Node<T>* o = out.get();
  Node<T>* xn = x.node().get();
  return finish<T>(out, {x.node()}, [o, xn] {
    auto& g = xn->grad_buffer();
    for (auto& v : g) v += o->grad[0];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of an empty list");
  if (axis != 0 && axis != 1) throw ShapeError("concat axis must be 0 or 1");
  for (const auto& p : parts) require_rank2(p, "concat");
  std::vector<NodePtr<T>> nodes;
  nodes.reserve(parts.size());
  for (const auto& p : parts) nodes.push_back(p.node());

  if (axis == 0) {
    const std::size_t c = parts[0].shape()[1];
    std::size_t r = 0;
    for (const auto& p : parts) {
      if (p.shape()[1] != c) throw ShapeError("concat rows: column counts differ");
      r += p.shape()[0];
    }
    auto out = new_node<T>({r, c}, "concat");
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.node()->data.begin(), p.node()->data.end(), out->data.begin() + off);
      off += p.size();
    }
    Node<T>* o = out.get();
    std::vector<Node<T>*> raw;
    for (auto& n : nodes) raw.push_back(n.get());
    return finish<T>(out, std::move(nodes), [o, raw] {
      std::size_t off = 0;
      for (Node<T>* p : raw) {
        const std::size_t len = p->data.size();
        if (p->requires_grad) {
          auto& g = p->grad_buffer();
          for (std::size_t i = 0; i < len; ++i) g[i] += o->grad[off + i];
        }
        off += len;
      }
    });
  }

  const std::size_t r = parts[0].shape()[0];
  std::size_t c = 0;
  for (const auto& p : parts) {
    if (p.shape()[0] != r) throw ShapeError("concat columns: row counts differ");
    c += p.shape()[1];
  }
  auto out = new_node<T>({r, c}, "concat");
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.shape()[1];
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(p.node()->data.begin() + i * pc, pc, out->data.begin() + i * c + col);
    }
    col += pc;
  }
  Node<T>* o = out.get();
  std::vector<Node<T>*> raw;
  for (auto& n : nodes) raw.push_back(n.get());
  return finish<T>(out, std::move(nodes), [o, raw, r, c] {
    std::size_t col = 0;
    for (Node<T>* p : raw) {
      const std::size_t pc = p->shape[1];
      if (p->requires_grad) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < pc; ++j) g[i * pc + j] += o->grad[i * c + col + j];
        }
      }
      col += pc;
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin, std::size_t end) {
  require_rank2(x, "slice");
  if (axis != 0 && axis != 1) throw ShapeError("slice axis must be 0 or 1");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  const std::size_t extent = axis == 0 ? r : c;
  if (begin >= end || end > extent) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for extent " + std::to_string(extent));
  }
  const std::size_t len = end - begin;
  Shape shape = axis == 0 ? Shape{len, c} : Shape{r, len};
  auto out = new_node<T>(shape, "slice");
  const auto& xd = x.node()->data;
  if (axis == 0) {
    std::copy(xd.begin() + begin * c, xd.begin() + end * c, out->data.begin());
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      std::copy_n(xd.begin() + i * c + begin, len, out->data.begin() + i * len);
    }
  }
  Node<T>* o = out.get();
  Node<T>* xn = x.node().get();
  return finish<T>(out, {x.node()}, [o, xn, axis, begin, len, r, c] {
    auto& g = xn->grad_buffer();
    if (axis == 0) {
      for (std::size_t i = 0; i < len * c; ++i) g[begin * c + i] += o->grad[i];
    } else {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < len; ++j) g[i * c + begin + j] += o->grad[i * len + j];
      }
    }
  });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  require_rank2(table, "embedding_lookup");
  if (ids.empty()) throw ShapeError("embedding_lookup with no ids");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  auto out = new_node<T>({ids.size(), d}, "embedding_lookup");
  const auto& td = table.node()->data;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw ShapeError("embedding id " + std::to_string(ids[i]) + " out of range [0, " +
                       std::to_string(v) + ")");
    }
    std::copy_n(td.begin() + ids[i] * d, d, out->data.begin() + i * d);
  }
  Node<T>* o = out.get();
  Node<T>* tn = table.node().get();
  std::vector<std::int32_t> idv(ids.begin(), ids.end());
  return finish<T>(out, {table.node()}, [o, tn, idv = std::move(idv), d] {
    auto& g = tn->grad_buffer();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      kernels::axpy(T(1), o->grad.data() + i * d, g.data() + idv[i] * d, d);
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  require_rank2(x, "softmax");
  if (axis < 0) axis += 2;
  if (axis != 0 && axis != 1) throw ShapeError("softmax axis must be 0 or 1");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  // Strided view: `count` vectors of length `len`, element stride `step`.
  const std::size_t count = axis == 1 ? r : c;
  const std::size_t len = axis == 1 ? c : r;
  const std::size_t outer = axis == 1 ? c : 1;
  const std::size_t step = axis == 1 ? 1 : c;
  auto out = new_node<T>(x.shape(), "softmax");
  std::vector<T> buf(len);
  const auto& xd = x.node()->data;
  for (std::size_t v = 0; v < count; ++v) {
    for (std::size_t j = 0; j < len; ++j) buf[j] = xd[v * outer + j * step];
    kernels::softmax_inplace(buf.data(), len);
    for (std::size_t j = 0; j < len; ++j) out->data[v * outer + j * step] = buf[j];
  }
  Node<T>* o = out.get();
  Node<T>* xn = x.node().get();
  return finish<T>(out, {x.node()}, [o, xn, count, len, outer, step] {
    auto& g = xn->grad_buffer();
    for (std::size_t v = 0; v < count; ++v) {
      T inner = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t idx = v * outer + j * step;
        inner += o->grad[idx] * o->data[idx];
      }
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t idx = v * outer + j * step;
        g[idx] += o->data[idx] * (o->grad[idx] - inner);
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t n = x.cols();
  if (n < 2) throw ShapeError("layer_norm needs a normalized axis of length >= 2");
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias size does not match row width " + std::to_string(n));
  }
  const std::size_t r = x.size() / n;
  auto out = new_node<T>(x.shape(), "layer_norm");
  std::vector<T> xhat(x.size());
  std::vector<T> inv(r);
  const T* xd = x.node()->data.data();
  for (std::size_t i = 0; i < r; ++i) {
    inv[i] = kernels::layer_norm_row(xd + i * n, gain.node()->data.data(),
                                     bias.node()->data.data(), out->data.data() + i * n,
                                     xhat.data() + i * n, n, eps);
  }
  Node<T>* o = out.get();
  Node<T>* xn = x.node().get();
  Node<T>* gn = gain.node().get();
  Node<T>* bn = bias.node().get();
  return finish<T>(out, {x.node(), gain.node(), bias.node()},
                   [o, xn, gn, bn, r, n, xhat = std::move(xhat), inv = std::move(inv)] {
                     const T* dy = o->grad.data();
                     if (gn->requires_grad) {
                       auto& g = gn->grad_buffer();
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < n; ++j) g[j] += dy[i * n + j] * xhat[i * n + j];
                     }
                     if (bn->requires_grad) {
                       auto& g = bn->grad_buffer();
                       for (std::size_t i = 0; i < r; ++i) kernels::axpy(T(1), dy + i * n, g.data(), n);
                     }
                     if (xn->requires_grad) {
                       auto& g = xn->grad_buffer();
                       const T* gain_d = gn->data.data();
                       const T nn = static_cast<T>(n);
                       for (std::size_t i = 0; i < r; ++i) {
                         T sum_d = 0, sum_dx = 0;
                         for (std::size_t j = 0; j < n; ++j) {
                           const T dxh = dy[i * n + j] * gain_d[j];
                           sum_d += dxh;
                           sum_dx += dxh * xhat[i * n + j];
                         }
                         for (std::size_t j = 0; j < n; ++j) {
                           const T dxh = dy[i * n + j] * gain_d[j];
                           g[i * n + j] +=
                               inv[i] / nn * (nn * dxh - sum_d - xhat[i * n + j] * sum_dx);
                         }
                       }
                     }
                   });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                        std::span<const std::uint8_t> mask) {
  require_rank2(logits, "cross_entropy");
  const std::size_t r = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != r || mask.size() != r) {
    throw ShapeError("cross_entropy: targets/mask length must equal logits rows");
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < r; ++i) {
    if (!mask[i]) continue;
    ++count;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw ShapeError("cross_entropy: target id " + std::to_string(targets[i]) +
                       " outside vocabulary of " + std::to_string(v));
    }
  }
  if (count == 0) throw ShapeError("cross_entropy: mask selects no positions");

  const T* ld = logits.node()->data.data();
  std::vector<T> probs;  // softmax of masked rows, kept for the adjoint
  probs.reserve(count * v);
  std::vector<std::size_t> rows;
  rows.reserve(count);
  T total = 0;
  for (std::size_t i = 0; i < r; ++i) {
    if (!mask[i]) continue;
    const T* row = ld + i * v;
    const std::size_t base = probs.size();
    probs.insert(probs.end(), row, row + v);
    T* p = probs.data() + base;
    kernels::softmax_inplace(p, v);
    T mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    T se = 0;
    for (std::size_t j = 0; j < v; ++j) se += std::exp(row[j] - mx);
    total += (mx + std::log(se)) - row[targets[i]];
    rows.push_back(i);
  }
  auto out = new_node<T>({1}, "cross_entropy");
  out->data[0] = total / static_cast<T>(count);
  Node<T>* o = out.get();
  Node<T>* ln = logits.node().get();
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  return finish<T>(out, {logits.node()},
                   [o, ln, v, count, probs = std::move(probs), rows = std::move(rows),
                    tgt = std::move(tgt)] {
                     auto& g = ln->grad_buffer();
                     const T w = o->grad[0] / static_cast<T>(count);
                     for (std::size_t k = 0; k < rows.size(); ++k) {
                       const std::size_t i = rows[k];
                       const T* p = probs.data() + k * v;
                       T* gi = g.data() + i * v;
                       for (std::size_t j = 0; j < v; ++j) gi[j] += w * p[j];
                       gi[tgt[i]] -= w;
                     }
                   });
}

template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           std::size_t batch, std::size_t heads) {
  require_rank2(q, "causal_attention");
  require_same_shape(q, k, "causal_attention");
  require_same_shape(q, v, "causal_attention");
  const std::size_t rows = q.shape()[0], d = q.shape()[1];
  if (batch == 0 || rows % batch != 0) {
    throw ShapeError("causal_attention: rows not divisible by batch size");
  }
  if (heads == 0 || d % heads != 0) {
    throw ShapeError("causal_attention: width not divisible by head count");
  }
  const std::size_t seq = rows / batch, hd = d / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(hd));
  auto out = new_node<T>(q.shape(), "causal_attention");
  // Attention weights per (batch, head, query): triangular, query i keeps i+1.
  const std::size_t tri = seq * (seq + 1) / 2;
  std::vector<T> probs(batch * heads * tri);
  const T* qd = q.node()->data.data();
  const T* kd = k.node()->data.data();
  const T* vd = v.node()->data.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      T* pbase = probs.data() + (b * heads + h) * tri;
      for (std::size_t i = 0; i < seq; ++i) {
        const std::size_t row = b * seq + i;
        kernels::attend_row(qd + row * d + h * hd, kd + b * seq * d + h * hd,
                            vd + b * seq * d + h * hd, d, i + 1, hd, sc,
                            pbase + i * (i + 1) / 2, out->data.data() + row * d + h * hd);
      }
    }
  }
  Node<T>* o = out.get();
  Node<T>* qn = q.node().get();
  Node<T>* kn = k.node().get();
  Node<T>* vn = v.node().get();
  return finish<T>(
      out, {q.node(), k.node(), v.node()},
      [o, qn, kn, vn, batch, heads, seq, d, hd, sc, tri, probs = std::move(probs)] {
        T* dq = qn->requires_grad ? qn->grad_buffer().data() : nullptr;
        T* dk = kn->requires_grad ? kn->grad_buffer().data() : nullptr;
        T* dv = vn->requires_grad ? vn->grad_buffer().data() : nullptr;
        std::vector<T> dp(seq);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            const T* pbase = probs.data() + (b * heads + h) * tri;
            for (std::size_t i = 0; i < seq; ++i) {
              const std::size_t row = b * seq + i;
              const T* go = o->grad.data() + row * d + h * hd;
              const T* p = pbase + i * (i + 1) / 2;
              T inner = 0;
              for (std::size_t j = 0; j <= i; ++j) {
                const std::size_t krow = b * seq + j;
                dp[j] = kernels::dot(go, vn->data.data() + krow * d + h * hd, hd);
                inner += p[j] * dp[j];
                if (dv) kernels::axpy(p[j], go, dv + krow * d + h * hd, hd);
              }
              for (std::size_t j = 0; j <= i; ++j) {
                const std::size_t krow = b * seq + j;
                const T ds = p[j] * (dp[j] - inner) * sc;
                if (ds == T(0)) continue;
                if (dq) kernels::axpy(ds, kn->data.data() + krow * d + h * hd, dq + row * d + h * hd, hd);
                if (dk) kernels::axpy(ds, qn->data.data() + row * d + h * hd, dk + krow * d + h * hd, hd);
              }
            }
          }
        }
      });
}

// ---- instantiations --------------------------------------------------------

#define PTUNE_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                               \
  template void backward<T>(Tensor<T>&);                                                  \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> matmul_bt<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                       \
  template Tensor<T> add_bias<T>(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                           \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                        \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                           \
  template Tensor<T> sum<T>(const Tensor<T>&);                                            \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                       \
  template Tensor<T> slice<T>(const Tensor<T>&, int, std::size_t, std::size_t);           \
  template Tensor<T> embedding_lookup<T>(const Tensor<T>&, std::span<const std::int32_t>); \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                   \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                   T);                                                    \
  template Tensor<T> cross_entropy<T>(const Tensor<T>&, std::span<const std::int32_t>,    \
                                      std::span<const std::uint8_t>);                     \
  template Tensor<T> causal_attention<T>(const Tensor<T>&, const Tensor<T>&,              \
                                         const Tensor<T>&, std::size_t, std::size_t);

PTUNE_INSTANTIATE(float)
PTUNE_INSTANTIATE(double)

#undef PTUNE_INSTANTIATE

}  // namespace ptune::ag
