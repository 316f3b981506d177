// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptune/checkpoint.hpp"
#include "ptune/tensor.hpp"

namespace ptune::model {

struct TransformerConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 64;
  int d_ffn = 256;
  int vocab_size = 512;
  int max_positions = 256;

  // Throws ConfigError when a size is non-positive or d_model % n_heads != 0.
  void validate() const;

  // "toy-S": 2 layers, width 64. "toy-M": 4 layers, width 128.
  static TransformerConfig toy_s(int vocab_size);
  static TransformerConfig toy_m(int vocab_size);
  static TransformerConfig preset(std::string_view name, int vocab_size);

  nlohmann::json to_json() const;
  static TransformerConfig from_json(const nlohmann::json& j);
  bool operator==(const TransformerConfig&) const = default;
};

template <typename T>
struct NamedTensor {
  std::string name;
  ag::Tensor<T> tensor;
};

// Sum of array sizes; trainable_only skips arrays without requires_grad.
template <typename T>
std::size_t count_parameters(const std::vector<NamedTensor<T>>& params, bool trainable_only) {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (!trainable_only || p.tensor.requires_grad()) n += p.tensor.size();
  }
  return n;
}

// Parameter count of a configuration, computed from the layout formula.
std::size_t closed_form_parameter_count(const TransformerConfig& config);

template <typename T>
struct LayerWeights {
  ag::Tensor<T> ln1_gain, ln1_bias;
  ag::Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  ag::Tensor<T> ln2_gain, ln2_bias;
  ag::Tensor<T> w_up, b_up, w_down, b_down;
};

// Key/value cache for one sequence during incremental decoding.
template <typename T>
struct DecodeState {
  std::size_t length = 0;
  std::vector<std::vector<T>> keys;    // per layer, length x d_model
  std::vector<std::vector<T>> values;  // per layer, length x d_model
};

// Decoder-only transformer: learned absolute positions, pre-norm blocks with
// causal multi-head attention and a GELU feed-forward, final layer norm and
// an LM head tied to the token embedding.
template <typename T>
class Transformer {
 public:
  // All arrays zero; gains one.
  explicit Transformer(const TransformerConfig& config);

  // Normal(0, 0.02) matrices and embeddings, zero biases, unit gains.
  static Transformer init(const TransformerConfig& config, std::uint64_t seed);

  const TransformerConfig& config() const { return config_; }
  bool frozen() const { return frozen_; }
  // Frozen weights never require gradients and never get gradient storage.
  void set_frozen(bool frozen);

  // Fixed order; the tensors share storage with the model.
  std::vector<NamedTensor<T>> parameters() const;
  std::size_t count_parameters(bool trainable_only) const {
    return model::count_parameters(parameters(), trainable_only);
  }

  const ag::Tensor<T>& token_embedding() const { return token_embedding_; }
  ag::Tensor<T> embed(std::span<const std::int32_t> ids) const;

  // inputs: [batch*seq x d_model] embeddings without positions; positions
  // 0..seq-1 are added here. Returns [batch*seq x vocab] logits.
  ag::Tensor<T> forward(const ag::Tensor<T>& inputs, std::size_t batch = 1) const;

  DecodeState<T> start_decode() const;
  // Appends one embedding row at position state.length and returns that
  // position's logits. Bit-identical to the matching row of forward().
  std::vector<T> decode_step(DecodeState<T>& state, std::span<const T> embedding_row) const;

  template <typename U>
  Transformer<U> cast() const;

 private:
  template <typename U>
  friend class Transformer;

  TransformerConfig config_;
  bool frozen_ = false;
  ag::Tensor<T> token_embedding_;
  ag::Tensor<T> position_embedding_;
  std::vector<LayerWeights<T>> layers_;
  ag::Tensor<T> final_gain_, final_bias_;
};

// Checkpoint container for transformer weights (32-bit floats on disk).
checkpoint::Container to_container(const Transformer<float>& model, std::uint64_t seed,
                                   std::int64_t step);
Transformer<float> transformer_from_container(const checkpoint::Container& container);
void save_transformer(const std::filesystem::path& path, const Transformer<float>& model,
                      std::uint64_t seed, std::int64_t step);
Transformer<float> load_transformer(const std::filesystem::path& path);

// SHA-256 over parameter names, shapes and raw bytes, as lowercase hex.
template <typename T>
std::string weights_digest(const std::vector<NamedTensor<T>>& params);

}  // namespace ptune::model
