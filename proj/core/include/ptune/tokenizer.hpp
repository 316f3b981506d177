// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace ptune::bpe {

using TokenId = std::int32_t;

inline constexpr TokenId kByteTokens = 256;
inline constexpr TokenId kBos = 256;
inline constexpr TokenId kEos = 257;
inline constexpr TokenId kPad = 258;
inline constexpr std::size_t kMinVocabSize = 259;
inline constexpr const char* kVocabFormat = "ptune-bpe-vocab";
inline constexpr int kVocabFormatVersion = 1;

// Byte-level BPE vocabulary. Ids 0..255 are raw bytes, 256..258 are the
// BOS/EOS/PAD specials, and merge i produces id 259 + i.
class Vocab {
 public:
  Vocab();
  explicit Vocab(std::vector<std::pair<TokenId, TokenId>> merges);

  std::size_t size() const { return kMinVocabSize + merges_.size(); }
  TokenId bos() const { return kBos; }
  TokenId eos() const { return kEos; }
  TokenId pad() const { return kPad; }
  bool is_special(TokenId id) const { return id >= kBos && id <= kPad; }

  const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }
  // Raw bytes of a token; empty for specials. Throws DataError on unknown ids.
  const std::string& token_bytes(TokenId id) const;
  // Inverse of token_bytes over non-special tokens.
  TokenId id_of(std::string_view bytes) const;

  std::vector<TokenId> encode(std::string_view text) const;
  // Specials decode to nothing; unknown ids throw DataError.
  std::string decode(std::span<const TokenId> ids) const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const;

  std::vector<std::pair<TokenId, TokenId>> merges_;
  std::vector<std::string> bytes_;  // indexed by id
  std::unordered_map<std::uint64_t, TokenId> rank_;  // packed pair -> merged id
  std::unordered_map<std::string, TokenId> by_bytes_;
};

// Splits text into pre-tokenization chunks (a single leading space attaches
// to the following word). Concatenating the chunks gives back the input.
std::vector<std::string_view> pretokenize(std::string_view text);

// Greedy BPE training: repeatedly merges the most frequent adjacent pair,
// ties broken by the lexicographically smallest (left bytes, right bytes),
// until vocab_size is reached or no pair occurs at least twice. Training is
// deterministic; seed is accepted for interface uniformity and unused.
Vocab train_bpe(std::span<const std::string> texts, std::size_t vocab_size,
                std::uint64_t seed = 0);

}  // namespace ptune::bpe
