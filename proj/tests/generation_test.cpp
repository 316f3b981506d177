// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "ptune/error.hpp"
#include "ptune/generation.hpp"
#include "ptune/model.hpp"
#include "ptune/prompt.hpp"
#include "test_util.hpp"

namespace ptune::gen {
namespace {

std::vector<double> log_probs(std::initializer_list<double> p) {
  std::vector<double> out;
  for (double v : p) out.push_back(std::log(v));
  return out;
}

GenerationConfig open_config(int k, double p, double t = 1.0) {
  GenerationConfig c;
  c.top_k = k;
  c.top_p = p;
  c.temperature = t;
  return c;
}

TEST(Filter, NucleusFixture) {
  const auto logits = log_probs({0.5, 0.3, 0.15, 0.05});
  const auto q = filter_distribution(logits, open_config(100, 0.9));
  ASSERT_EQ(q.size(), 4u);
  EXPECT_NEAR(q[0], 0.5 / 0.95, 1e-12);
  EXPECT_NEAR(q[1], 0.3 / 0.95, 1e-12);
  EXPECT_NEAR(q[2], 0.15 / 0.95, 1e-12);
  EXPECT_EQ(q[3], 0.0);
  EXPECT_NEAR(q[0], 0.5263, 1e-4);
  EXPECT_NEAR(q[1], 0.3158, 1e-4);
  EXPECT_NEAR(q[2], 0.1579, 1e-4);
  EXPECT_EQ(nucleus_support(logits, open_config(100, 0.9)), (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Filter, TopKOneIsArgmax) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(20);
    for (auto& v : logits) v = rng.normal(0, 3);
    const auto arg = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    for (double p : {0.01, 0.5, 1.0}) {
      for (double t : {0.1, 1.0, 5.0}) {
        const auto q = filter_distribution(logits, open_config(1, p, t));
        for (std::size_t i = 0; i < q.size(); ++i) EXPECT_EQ(q[i], i == arg ? 1.0 : 0.0);
      }
    }
  }
}

TEST(Filter, IdentityConfigurationIsSoftmax) {
  const std::vector<double> logits = {1.0, -0.5, 2.0, 0.0};
  const auto q = filter_distribution(logits, open_config(4, 1.0));
  double z = 0.0;
  for (double v : logits) z += std::exp(v);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(q[i], std::exp(logits[i]) / z, 1e-15);
}

TEST(Filter, TiesBreakByLowerId) {
  const std::vector<double> logits = {0.0, 1.0, 1.0, 1.0};
  EXPECT_EQ(nucleus_support(logits, open_config(2, 1.0)), (std::vector<std::size_t>{1, 2}));
}

TEST(Filter, NucleusMonotoneInP) {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<double> logits(n);
    for (auto& v : logits) v = rng.normal(0, 2);
    const double p1 = rng.uniform(0.01, 1.0);
    const double p2 = rng.uniform(p1, 1.0);
    const auto a = nucleus_support(logits, open_config(1000, p1));
    const auto b = nucleus_support(logits, open_config(1000, p2));
    ASSERT_LE(a.size(), b.size());
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST(Filter, RejectsBadConfig) {
  const std::vector<double> logits = {0.0, 1.0};
  EXPECT_THROW(filter_distribution(logits, open_config(0, 0.9)), ConfigError);
  EXPECT_THROW(filter_distribution(logits, open_config(1, 0.0)), ConfigError);
  EXPECT_THROW(filter_distribution(logits, open_config(1, 1.5)), ConfigError);
  EXPECT_THROW(filter_distribution(logits, open_config(1, 0.5, 0.0)), ConfigError);
}

class Generate : public ::testing::Test {
 protected:
  void SetUp() override {
    weights = model::Transformer<float>::init(model::TransformerConfig{2, 2, 16, 32, 300, 128}, 4);
    weights.set_frozen(true);
    Rng rng(2);
    std::vector<float> v(3 * 16);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    virt = ag::Tensor<float>::from({3, 16}, v);
    prompt_ids = vocab.encode(prompt::frame_text("Doctor: hello"));
  }
  bpe::Vocab vocab;
  model::Transformer<float> weights{model::TransformerConfig{}};
  ag::Tensor<float> virt;
  std::vector<bpe::TokenId> prompt_ids;
};

TEST_F(Generate, GreedyIgnoresSeed) {
  GenerationConfig c;
  c.max_new_tokens = 20;
  const auto first = generate_ids(weights, &virt, prompt_ids, c);
  for (std::uint64_t s = 1; s < 10; ++s) {
    c.seed = s;
    EXPECT_EQ(generate_ids(weights, &virt, prompt_ids, c), first);
  }
}

TEST_F(Generate, CacheMatchesRecompute) {
  for (int k : {1, 5, 300}) {
    GenerationConfig c = open_config(k, 0.95, 1.0);
    c.max_new_tokens = 24;
    c.seed = 7;
    c.use_cache = true;
    const auto cached = generate_ids(weights, &virt, prompt_ids, c);
    c.use_cache = false;
    EXPECT_EQ(generate_ids(weights, &virt, prompt_ids, c), cached) << k;
  }
}

TEST_F(Generate, SamplingIsSeeded) {
  GenerationConfig c = open_config(300, 1.0, 1.5);
  c.max_new_tokens = 16;
  c.seed = 3;
  const auto a = generate_ids(weights, &virt, prompt_ids, c);
  EXPECT_EQ(generate_ids(weights, &virt, prompt_ids, c), a);
  bool differs = false;
  for (std::uint64_t s = 4; s < 10 && !differs; ++s) {
    c.seed = s;
    differs = generate_ids(weights, &virt, prompt_ids, c) != a;
  }
  EXPECT_TRUE(differs);
}

TEST_F(Generate, CapAndNoEos) {
  for (int cap : {1, 5, 64}) {
    GenerationConfig c = open_config(300, 1.0, 2.0);
    c.max_new_tokens = cap;
    for (std::uint64_t s = 0; s < 5; ++s) {
      c.seed = s;
      const auto ids = generate_ids(weights, &virt, prompt_ids, c);
      EXPECT_LE(ids.size(), static_cast<std::size_t>(cap));
      for (auto id : ids) EXPECT_NE(id, bpe::kEos);
    }
  }
}

TEST_F(Generate, ContextOverflowIsAnError) {
  GenerationConfig c;
  c.max_new_tokens = 128;
  EXPECT_THROW(generate_ids(weights, &virt, prompt_ids, c), ShapeError);
  const std::vector<bpe::TokenId> empty;
  c.max_new_tokens = 4;
  EXPECT_THROW(generate_ids<float>(weights, nullptr, empty, c), ShapeError);
}

TEST_F(Generate, TextDropsSpecials) {
  GenerationConfig c = open_config(300, 1.0, 3.0);
  c.max_new_tokens = 30;
  for (std::uint64_t s = 0; s < 20; ++s) {
    c.seed = s;
    const auto text = generate(weights, &virt, vocab, "Doctor: hello", c);
    EXPECT_LE(text.size(), 30u * 3);
    EXPECT_NO_THROW(nlohmann::json(text).dump()) << "seed " << s;
  }
}

}  // namespace
}  // namespace ptune::gen
