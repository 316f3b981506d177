// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Row-oriented numeric kernels shared by the autograd ops and the cached
// decoder. Every output element is produced by the same instruction sequence
// no matter how many rows are processed in one call, which is what makes
// incremental decoding bit-identical to a full recomputation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace ptune::kernels {

// Fixed 16-lane accumulation order; vectorizes without reassociation.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t kLanes = 16;
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  }
  T s = 0;
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// y += alpha * x
template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// C[m x n] += A[m x k] * B[k x n], all row-major. Rows are processed four
// at a time; every output element still accumulates over k in order, so a
// row's result does not depend on m.
template <typename T>
inline void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    T* __restrict c0 = c + i * n;
    T* __restrict c1 = c0 + n;
    T* __restrict c2 = c1 + n;
    T* __restrict c3 = c2 + n;
    const T* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T bj = brow[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    T* __restrict crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] * B^T where B is [n x k].
template <typename T>
inline void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += dot(arow, b + j * k, k);
  }
}

// C[k x n] += A^T * B where A is [m x k] and B is [m x n]. Each output
// element accumulates over m in order.
template <typename T>
inline void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const T* a0 = a + i * k;
    const T* __restrict b0 = b + i * n;
    const T* __restrict b1 = b0 + n;
    const T* __restrict b2 = b1 + n;
    const T* __restrict b3 = b2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const T v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
      T* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        T s = crow[j];
        s += v0 * b0[j];
        s += v1 * b1[j];
        s += v2 * b2[j];
        s += v3 * b3[j];
        crow[j] = s;
      }
    }
  }
  for (; i < m; ++i) {
    const T* arow = a + i * k;
    const T* __restrict brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
inline void add_bias_row(const T* bias, T* row, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) row[j] += bias[j];
}

// Normalizes one row: y = (x - mean) / sqrt(var + eps) * gain + bias.
// Writes the normalized pre-affine values to xhat when non-null and returns
// the inverse standard deviation.
template <typename T>
inline T layer_norm_row(const T* x, const T* gain, const T* bias, T* y, T* xhat,
                        std::size_t n, T eps) {
  T mean = 0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<T>(n);
  T var = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const T d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<T>(n);
  const T inv = T(1) / std::sqrt(var + eps);
  for (std::size_t j = 0; j < n; ++j) {
    const T h = (x[j] - mean) * inv;
    if (xhat) xhat[j] = h;
    y[j] = h * gain[j] + bias[j];
  }
  return inv;
}

// tanh-approximated GELU as used by GPT-2.
template <typename T>
inline T gelu(T x) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <typename T>
inline T gelu_grad(T x) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T u = c * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(u);
  const T du = c * (T(1) + T(3) * T(0.044715) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// In-place numerically stable softmax over n entries.
template <typename T>
inline void softmax_inplace(T* x, std::size_t n) {
  T mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  T sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    x[j] = std::exp(x[j] - mx);
    sum += x[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < n; ++j) x[j] *= inv;
}

// One causal attention query for one head. q points at the head slice of the
// query row; keys and values are rows 0..len-1 with the given row stride,
// already offset to the head. probs receives len attention weights and out
// receives head_dim values (overwritten).
template <typename T>
inline void attend_row(const T* q, const T* keys, const T* values,
                       std::size_t stride, std::size_t len, std::size_t head_dim,
                       T scale, T* probs, T* out) {
  for (std::size_t j = 0; j < len; ++j) {
    probs[j] = dot(q, keys + j * stride, head_dim) * scale;
  }
  softmax_inplace(probs, len);
  std::fill(out, out + head_dim, T(0));
  for (std::size_t j = 0; j < len; ++j) {
    axpy(probs[j], values + j * stride, out, head_dim);
  }
}

}  // namespace ptune::kernels
