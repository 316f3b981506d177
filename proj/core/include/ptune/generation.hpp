// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptune/model.hpp"
#include "ptune/tokenizer.hpp"

namespace ptune::gen {

struct GenerationConfig {
  int top_k = 1;
  double top_p = 0.9;
  double temperature = 0.1;
  int max_new_tokens = 64;
  std::uint64_t seed = 0;
  bool use_cache = true;

  void validate() const;
  nlohmann::json to_json() const;
  static GenerationConfig from_json(const nlohmann::json& j);
};

// Temperature, softmax, top-k, then the smallest descending-probability
// prefix reaching top_p, renormalized. Ties are ordered by token id. Returns
// a full-length vector that is zero outside the surviving set.
std::vector<double> filter_distribution(std::span<const double> logits,
                                        const GenerationConfig& config);

// Surviving token ids in descending-probability order.
std::vector<std::size_t> nucleus_support(std::span<const double> logits,
                                         const GenerationConfig& config);

// Samples continuation ids after the given prefix (virtual rows followed by
// prompt tokens). Stops at EOS, which is not included in the result.
// virtual_emb may be null.
template <typename T>
std::vector<bpe::TokenId> generate_ids(const model::Transformer<T>& weights,
                                       const ag::Tensor<T>* virtual_emb,
                                       std::span<const bpe::TokenId> prompt,
                                       const GenerationConfig& config);

// Summary for one dialogue using the inference-mode template. Invalid UTF-8
// left by a truncated byte sequence comes back as U+FFFD.
std::string generate(const model::Transformer<float>& weights, const ag::Tensor<float>* virtual_emb,
                     const bpe::Vocab& vocab, std::string_view dialogue,
                     const GenerationConfig& config);

}  // namespace ptune::gen
