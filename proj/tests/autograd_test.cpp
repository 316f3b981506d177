// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "ptune/error.hpp"
#include "ptune/tensor.hpp"
#include "test_util.hpp"

namespace ptune {
namespace {

using ag::Tensor;
using testing::grad_check;
using testing::kFdTolerance;
using testing::project;
using testing::random_tensor;

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

TEST(Matmul, HandExample) {
  auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<double>::from({2, 2}, {5, 6, 7, 8});
  auto c = ag::matmul(a, b);
  EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()),
            (std::vector<double>{19, 22, 43, 50}));
}

TEST(Matmul, IdentityAndZero) {
  Rng rng(3);
  auto a = random_tensor({3, 4}, rng, false);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  auto id = ag::matmul(a, Tensor<double>::from({4, 4}, eye));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(id.data()[i], a.data()[i]);
  auto z = ag::matmul(a, Tensor<double>::zeros({4, 2}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(ag::matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3})),
               ShapeError);
}

TEST(Softmax, HandValues) {
  auto s = ag::softmax(Tensor<double>::from({1, 2}, {0.0, std::log(2.0)}), 1);
  EXPECT_NEAR(s.data()[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.data()[1], 2.0 / 3.0, 1e-15);
  auto u = ag::softmax(Tensor<double>::full({1, 5}, 0.7), 1);
  for (double v : u.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({3, 6}, rng, false, 3.0);
    const double c = rng.uniform(-50, 50);
    std::vector<double> shifted(x.data().begin(), x.data().end());
    for (auto& v : shifted) v += c;
    auto a = ag::softmax(x, 1);
    auto b = ag::softmax(Tensor<double>::from({3, 6}, shifted), 1);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
  }
}

TEST(LayerNorm, HandValues) {
  auto gain = Tensor<double>::full({2}, 1.0);
  auto bias = Tensor<double>::zeros({2});
  auto y = ag::layer_norm(Tensor<double>::from({1, 2}, {1.0, 3.0}), gain, bias, 1e-12);
  EXPECT_NEAR(y.data()[0], -1.0, 1e-9);
  EXPECT_NEAR(y.data()[1], 1.0, 1e-9);

  auto g4 = Tensor<double>::full({4}, 1.0);
  auto c = ag::layer_norm(Tensor<double>::full({1, 4}, 2.5), g4, Tensor<double>::zeros({4}));
  for (double v : c.data()) EXPECT_EQ(v, 0.0);

  auto b4 = Tensor<double>::from({4}, {0.1, -0.2, 0.3, 0.4});
  Rng rng(4);
  auto z = ag::layer_norm(random_tensor({3, 4}, rng, false), Tensor<double>::zeros({4}), b4);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(z.at(r, j), b4.data()[j]);
  }
}

TEST(CrossEntropy, UniformAndPerfect) {
  const std::size_t v = 7;
  std::vector<std::int32_t> targets = {2, 5, 0};
  std::vector<std::uint8_t> mask = {1, 1, 0};
  auto uniform = ag::cross_entropy(Tensor<double>::zeros({3, v}), targets, mask);
  EXPECT_NEAR(uniform.item(), std::log(7.0), 1e-12);

  std::vector<double> peaked(3 * v, -1e4);
  for (std::size_t r = 0; r < 3; ++r) peaked[r * v + targets[r]] = 1e4;
  auto perfect = ag::cross_entropy(Tensor<double>::from({3, v}, peaked), targets, mask);
  EXPECT_EQ(perfect.item(), 0.0);
}

TEST(CrossEntropy, MeanOverMaskedPositions) {
  Rng rng(12);
  auto logits = random_tensor({4, 5}, rng, false);
  std::vector<std::int32_t> t = {1, 3, 4, 0};
  const std::vector<std::uint8_t> only0 = {1, 0, 0, 0}, only2 = {0, 0, 1, 0}, both = {1, 0, 1, 0};
  const double a = ag::cross_entropy(logits, t, only0).item();
  const double b = ag::cross_entropy(logits, t, only2).item();
  EXPECT_NEAR(ag::cross_entropy(logits, t, both).item(), (a + b) / 2, 1e-14);
}

TEST(CrossEntropy, EmptyMaskThrows) {
  std::vector<std::int32_t> t = {0};
  std::vector<std::uint8_t> m = {0};
  EXPECT_THROW(ag::cross_entropy(Tensor<double>::zeros({1, 3}), t, m), ShapeError);
}

TEST(Backward, SquareSum) {
  auto x = Tensor<double>::from({3}, {1.5, -2.0, 0.25}, true);
  auto loss = ag::sum(ag::mul(x, x));
  ag::backward(loss);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 2 * x.data()[i]);
}

TEST(Backward, DisconnectedParameterHasZeroGrad) {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  auto p = Tensor<double>::from({2}, {3.0, 4.0}, true);
  auto loss = ag::sum(ag::scale(x, 3.0));
  ag::backward(loss);
  for (double g : p.grad()) EXPECT_EQ(g, 0.0);
  for (double g : x.grad()) EXPECT_EQ(g, 3.0);
}

TEST(Backward, GraphIsSingleUse) {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  auto loss = ag::sum(ag::tanh(x));
  ag::backward(loss);
  EXPECT_THROW(ag::backward(loss), Error);
}

TEST(Backward, NonScalarLossThrows) {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  auto y = ag::tanh(x);
  EXPECT_THROW(ag::backward(y), ShapeError);
}

TEST(Backward, FrozenLeafGetsNoGradient) {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  auto w = Tensor<double>::from({2}, {0.5, 0.5}, false);
  auto loss = ag::sum(ag::mul(x, w));
  ag::backward(loss);
  EXPECT_FALSE(w.has_grad());
  EXPECT_TRUE(x.has_grad());
}

// ---- finite-difference checks, one per primitive ---------------------------

class FiniteDifference : public ::testing::TestWithParam<std::uint64_t> {};

#define EXPECT_GRAD_OK(result)                          \
  do {                                                  \
    auto r_ = (result);                                 \
    EXPECT_GT(r_.checked, 0u);                          \
    EXPECT_LE(r_.max_rel_error, kFdTolerance);          \
  } while (0)

TEST_P(FiniteDifference, Matmul) {
  Rng rng(GetParam());
  auto a = random_tensor({3, 5}, rng, true);
  auto b = random_tensor({5, 4}, rng, true);
  EXPECT_GRAD_OK(grad_check({a, b}, [&] { return project(ag::matmul(a, b), GetParam()); }));
}

TEST_P(FiniteDifference, MatmulBt) {
  Rng rng(GetParam());
  auto a = random_tensor({3, 5}, rng, true);
  auto b = random_tensor({4, 5}, rng, true);
  EXPECT_GRAD_OK(grad_check({a, b}, [&] { return project(ag::matmul_bt(a, b), GetParam()); }));
}

TEST_P(FiniteDifference, AddSubMulScale) {
  Rng rng(GetParam());
  auto a = random_tensor({2, 3}, rng, true);
  auto b = random_tensor({2, 3}, rng, true);
  EXPECT_GRAD_OK(grad_check({a, b}, [&] {
    return project(ag::scale(ag::mul(ag::add(a, b), ag::sub(a, b)), 0.7), GetParam());
  }));
}

TEST_P(FiniteDifference, AddBias) {
  Rng rng(GetParam());
  auto x = random_tensor({4, 3}, rng, true);
  auto b = random_tensor({3}, rng, true);
  EXPECT_GRAD_OK(grad_check({x, b}, [&] { return project(ag::add_bias(x, b), GetParam()); }));
}

TEST_P(FiniteDifference, Tanh) {
  Rng rng(GetParam());
  auto x = random_tensor({3, 4}, rng, true);
  EXPECT_GRAD_OK(grad_check({x}, [&] { return project(ag::tanh(x), GetParam()); }));
}

TEST_P(FiniteDifference, Sigmoid) {
  Rng rng(GetParam());
  auto x = random_tensor({3, 4}, rng, true, 2.0);
  EXPECT_GRAD_OK(grad_check({x}, [&] { return project(ag::sigmoid(x), GetParam()); }));
}

TEST_P(FiniteDifference, Gelu) {
  Rng rng(GetParam());
  auto x = random_tensor({3, 4}, rng, true, 2.0);
  EXPECT_GRAD_OK(grad_check({x}, [&] { return project(ag::gelu(x), GetParam()); }));
}

TEST_P(FiniteDifference, Sum) {
  Rng rng(GetParam());
  auto x = random_tensor({3, 4}, rng, true);
  EXPECT_GRAD_OK(grad_check({x}, [&] { return ag::scale(ag::sum(ag::mul(x, x)), 0.5); }));
}

TEST_P(FiniteDifference, ConcatBothAxes) {
  Rng rng(GetParam());
  auto a = random_tensor({2, 3}, rng, true);
  auto b = random_tensor({1, 3}, rng, true);
  auto c = random_tensor({2, 2}, rng, true);
  EXPECT_GRAD_OK(grad_check({a, b}, [&] {
    return project(ag::concat(std::vector<Tensor<double>>{a, b}, 0), GetParam());
  }));
  EXPECT_GRAD_OK(grad_check({a, c}, [&] {
    return project(ag::concat(std::vector<Tensor<double>>{a, c}, 1), GetParam());
  }));
}

TEST_P(FiniteDifference, SliceBothAxes) {
  Rng rng(GetParam());
  auto x = random_tensor({4, 5}, rng, true);
  EXPECT_GRAD_OK(grad_check({x}, [&] { return project(ag::slice(x, 0, 1, 3), GetParam()); }));
  EXPECT_GRAD_OK(grad_check({x}, [&] { return project(ag::slice(x, 1, 2, 5), GetParam()); }));
}

TEST_P(FiniteDifference, EmbeddingLookup) {
  Rng rng(GetParam());
  auto table = random_tensor({6, 3}, rng, true);
  const std::vector<std::int32_t> ids = {4, 1, 4, 0};
  EXPECT_GRAD_OK(grad_check(
      {table}, [&] { return project(ag::embedding_lookup(table, std::span(ids)), GetParam()); }));
}

TEST_P(FiniteDifference, SoftmaxBothAxes) {
  Rng rng(GetParam());
  auto x = random_tensor({3, 4}, rng, true);
  EXPECT_GRAD_OK(grad_check({x}, [&] { return project(ag::softmax(x, 1), GetParam()); }));
  EXPECT_GRAD_OK(grad_check({x}, [&] { return project(ag::softmax(x, 0), GetParam()); }));
}

TEST_P(FiniteDifference, LayerNorm) {
  Rng rng(GetParam());
  auto x = random_tensor({3, 5}, rng, true);
  auto g = random_tensor({5}, rng, true);
  auto b = random_tensor({5}, rng, true);
  EXPECT_GRAD_OK(grad_check({x, g, b}, [&] { return project(ag::layer_norm(x, g, b), GetParam()); }));
}

TEST_P(FiniteDifference, CrossEntropy) {
  Rng rng(GetParam());
  auto logits = random_tensor({4, 6}, rng, true);
  const std::vector<std::int32_t> t = {5, 0, 2, 3};
  const std::vector<std::uint8_t> m = {1, 0, 1, 1};
  EXPECT_GRAD_OK(grad_check({logits}, [&] { return ag::cross_entropy(logits, t, m); }));
}

TEST_P(FiniteDifference, CausalAttention) {
  Rng rng(GetParam());
  const std::size_t batch = 2, seq = 3, d = 4;
  auto q = random_tensor({batch * seq, d}, rng, true);
  auto k = random_tensor({batch * seq, d}, rng, true);
  auto v = random_tensor({batch * seq, d}, rng, true);
  EXPECT_GRAD_OK(grad_check(
      {q, k, v}, [&] { return project(ag::causal_attention(q, k, v, batch, 2), GetParam()); }));
}

INSTANTIATE_TEST_SUITE_P(Seeds, FiniteDifference, ::testing::ValuesIn(kSeeds));

TEST(CausalAttention, FutureDoesNotLeak) {
  Rng rng(5);
  const std::size_t seq = 5, d = 4;
  auto q = random_tensor({seq, d}, rng, false);
  auto k = random_tensor({seq, d}, rng, false);
  auto v = random_tensor({seq, d}, rng, false);
  auto base = ag::causal_attention(q, k, v, 1, 2);
  auto k2 = k.clone(false);
  auto v2 = v.clone(false);
  for (std::size_t j = 0; j < d; ++j) {
    k2.data()[4 * d + j] += 1.0;
    v2.data()[4 * d + j] -= 2.0;
  }
  auto moved = ag::causal_attention(q, k2, v2, 1, 2);
  for (std::size_t i = 0; i < 4 * d; ++i) EXPECT_EQ(base.data()[i], moved.data()[i]);
}

TEST(Finite, NonFiniteValueIsRejected) {
  auto x = Tensor<double>::from({1}, {1e308}, true);
  EXPECT_THROW(ag::scale(x, 1e10), NumericError);
}

}  // namespace
}  // namespace ptune
