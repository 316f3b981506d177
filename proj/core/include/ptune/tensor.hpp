// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense row-major tensors with define-by-run reverse-mode differentiation.
//
// Each op that has at least one input with requires_grad records its inputs
// and an adjoint closure on the output node. backward() walks the recorded
// graph once in reverse topological order and then releases it; a graph can
// be differentiated only once. Nodes that do not require gradients never get
// gradient storage.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ptune::ag {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;

  bool is_leaf() const { return parents.empty() && !backward; }
  // Allocates zeroed gradient storage on first use.
  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  // For rank-2 tensors; a rank-1 tensor is treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const;
  T at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  // Only valid on leaves. Turning gradients off drops any stored gradient.
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  // Empty span when no gradient has been accumulated.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  void zero_grad();

  // New leaf holding a copy of the values, disconnected from any graph.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::string& op_name() const { return node_->op; }

  // Internal: used by the op implementations.
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Propagates d(loss)/d(x) to every reachable tensor with requires_grad.
// Throws ShapeError for a non-scalar loss and Error when the graph was
// already consumed by a previous call.
template <typename T>
void backward(Tensor<T>& loss);

// ---- ops -------------------------------------------------------------------

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a[m x k] * b^T where b is [n x k].
template <typename T> Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
// x[n x c] + bias[c] broadcast over rows.
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::size_t begin, std::size_t end);
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids);
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5));
// Mean over rows with mask[i] != 0 of -log softmax(logits[i])[targets[i]].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                        std::span<const std::uint8_t> mask);
// Fused multi-head causal self-attention. q, k, v are [batch*seq x d] with
// sequences stored contiguously; heads split d evenly.
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           std::size_t batch, std::size_t heads);

}  // namespace ptune::ag
