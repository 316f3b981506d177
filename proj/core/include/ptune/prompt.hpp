// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptune/checkpoint.hpp"
#include "ptune/model.hpp"
#include "ptune/tokenizer.hpp"

namespace ptune::prompt {

enum class EncoderType { kMlp, kLstm };

std::string to_string(EncoderType t);
EncoderType encoder_type_from_string(std::string_view s);

struct PromptEncoderConfig {
  int num_virtual_tokens = 16;
  EncoderType encoder_type = EncoderType::kLstm;
  int input_embed_dim = 0;  // 0 selects model_dim
  int lstm_layers = 10;
  int lstm_hidden = 1024;
  int mlp_hidden = 0;  // 0 selects model_dim
  int model_dim = 128;

  // Fills the zero-means-default fields.
  PromptEncoderConfig resolved() const;
  // Throws ConfigError. lstm_hidden must be even (two directions).
  void validate() const;

  nlohmann::json to_json() const;
  static PromptEncoderConfig from_json(const nlohmann::json& j);
  bool operator==(const PromptEncoderConfig&) const = default;
};

std::size_t closed_form_parameter_count(const PromptEncoderConfig& config);

template <typename T>
struct LstmDirection {
  ag::Tensor<T> w_ih;  // [in x 4h], gate order i, f, g, o
  ag::Tensor<T> w_hh;  // [h x 4h]
  ag::Tensor<T> bias;  // [4h]
};

// Trainable virtual-token bank plus its reparameterization network.
template <typename T>
class PromptEncoder {
 public:
  explicit PromptEncoder(const PromptEncoderConfig& config);
  static PromptEncoder init(const PromptEncoderConfig& config, std::uint64_t seed);

  const PromptEncoderConfig& config() const { return config_; }
  std::vector<model::NamedTensor<T>> parameters() const;
  std::size_t count_parameters(bool trainable_only) const {
    return model::count_parameters(parameters(), trainable_only);
  }

  // [m x model_dim], rebuilt from the parameters on every call.
  ag::Tensor<T> virtual_embeddings() const;

  template <typename U>
  PromptEncoder<U> cast() const;

 private:
  template <typename U>
  friend class PromptEncoder;

  ag::Tensor<T> run_direction(const ag::Tensor<T>& input, const LstmDirection<T>& dir,
                              bool reverse) const;

  PromptEncoderConfig config_;
  ag::Tensor<T> virtual_input_;
  // Two-layer tanh network. MLP: E -> mlp_hidden -> H. LSTM head:
  // lstm_hidden -> lstm_hidden -> H.
  ag::Tensor<T> w1_, b1_, w2_, b2_;
  std::vector<std::vector<LstmDirection<T>>> lstm_;  // [layer][direction]
};

checkpoint::Container to_container(const PromptEncoder<float>& encoder, std::uint64_t seed,
                                   std::int64_t step);
PromptEncoder<float> encoder_from_container(const checkpoint::Container& container);

// A prompt exported as its evaluated embedding rows.
checkpoint::Container folded_container(const PromptEncoder<float>& encoder, std::uint64_t seed,
                                       std::int64_t step);

// Loads either an encoder or a folded export and returns the [m x H] rows.
ag::Tensor<float> load_virtual_embeddings(const std::filesystem::path& path);

// ---- template assembly ----------------------------------------------------

enum class Mode { kTrain, kInfer };

inline constexpr std::string_view kInputPrefix = "Input: ";
inline constexpr std::string_view kOutputMarker = "\n Output:";

std::string frame_text(std::string_view dialogue);

struct TemplateTokens {
  std::vector<bpe::TokenId> frame;
  std::vector<bpe::TokenId> output;  // summary tokens then EOS; empty at inference
};

TemplateTokens encode_template(const bpe::Vocab& vocab, std::string_view dialogue,
                               const std::optional<std::string>& summary, Mode mode);

template <typename T>
struct AssembledSequence {
  ag::Tensor<T> embeddings;         // [(m + frame + output) x H]
  std::vector<std::uint8_t> loss_mask;  // true on output-segment positions
  std::vector<bpe::TokenId> tokens;     // -1 on virtual positions
  std::size_t virtual_len = 0;
  std::size_t frame_len = 0;
  std::size_t output_len = 0;
  std::size_t size() const { return loss_mask.size(); }
};

template <typename T>
AssembledSequence<T> assemble(const ag::Tensor<T>& virtual_emb, const bpe::Vocab& vocab,
                              const model::Transformer<T>& weights, std::string_view dialogue,
                              const std::optional<std::string>& summary, Mode mode);

// Right-padded training batch ready for the transformer and the loss.
template <typename T>
struct Batch {
  ag::Tensor<T> embeddings;             // [batch*seq x H]
  std::vector<std::int32_t> targets;    // next token for each row
  std::vector<std::uint8_t> loss_mask;  // row predicts an output-segment token
  std::size_t batch = 0;
  std::size_t seq = 0;
};

// virtual_emb may be null for a prompt-free batch (fine-tuning). Padding
// rows use the PAD embedding and never enter the loss.
template <typename T>
Batch<T> assemble_batch(const ag::Tensor<T>* virtual_emb, const model::Transformer<T>& weights,
                        std::span<const TemplateTokens> items);

}  // namespace ptune::prompt
