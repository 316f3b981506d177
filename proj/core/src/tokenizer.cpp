// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/tokenizer.hpp"

#include <fstream>
#include <map>
#include <tuple>

#include "ptune/error.hpp"

namespace ptune::bpe {

namespace {

std::uint64_t pack(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

enum class ByteClass { kLetter, kDigit, kSpace, kOther };

ByteClass classify(unsigned char c) {
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80) return ByteClass::kLetter;
  if (c >= '0' && c <= '9') return ByteClass::kDigit;
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
    return ByteClass::kSpace;
  }
  return ByteClass::kOther;
}

}  // namespace

std::vector<std::string_view> pretokenize(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const std::size_t start = i;
    if (classify(static_cast<unsigned char>(text[i])) == ByteClass::kSpace) {
      const bool attaches =
          text[i] == ' ' && i + 1 < n &&
          classify(static_cast<unsigned char>(text[i + 1])) != ByteClass::kSpace;
      if (!attaches) {
        std::size_t j = i;
        while (j < n && classify(static_cast<unsigned char>(text[j])) == ByteClass::kSpace) ++j;
        // Leave a final ' ' for the following word.
        if (j < n && j - 1 > i && text[j - 1] == ' ') --j;
        chunks.push_back(text.substr(start, j - start));
        i = j;
        continue;
      }
      ++i;
    }
    const auto cls = classify(static_cast<unsigned char>(text[i]));
    while (i < n && classify(static_cast<unsigned char>(text[i])) == cls) ++i;
    chunks.push_back(text.substr(start, i - start));
  }
  return chunks;
}

Vocab::Vocab() : Vocab(std::vector<std::pair<TokenId, TokenId>>{}) {}

Vocab::Vocab(std::vector<std::pair<TokenId, TokenId>> merges) : merges_(std::move(merges)) {
  bytes_.reserve(size());
  for (int b = 0; b < kByteTokens; ++b) bytes_.emplace_back(1, static_cast<char>(b));
  for (TokenId s = kBos; s <= kPad; ++s) bytes_.emplace_back();
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    const auto [a, b] = merges_[i];
    const TokenId next = static_cast<TokenId>(kMinVocabSize + i);
    if (a < 0 || b < 0 || a >= next || b >= next || is_special(a) || is_special(b)) {
      throw DataError("invalid merge rule " + std::to_string(i) + ": (" + std::to_string(a) +
                      ", " + std::to_string(b) + ")");
    }
    if (!rank_.emplace(pack(a, b), next).second) {
      throw DataError("duplicate merge rule at index " + std::to_string(i));
    }
    bytes_.push_back(bytes_[a] + bytes_[b]);
  }
  for (std::size_t id = 0; id < bytes_.size(); ++id) {
    if (is_special(static_cast<TokenId>(id))) continue;
    by_bytes_.emplace(bytes_[id], static_cast<TokenId>(id));
  }
}

const std::string& Vocab::token_bytes(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= bytes_.size()) {
    throw DataError("unknown token id " + std::to_string(id));
  }
  return bytes_[id];
}

TokenId Vocab::id_of(std::string_view bytes) const {
  auto it = by_bytes_.find(std::string(bytes));
  if (it == by_bytes_.end()) throw DataError("no token for the given bytes");
  return it->second;
}

void Vocab::encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
  std::vector<TokenId> sym;
  sym.reserve(chunk.size());
  for (unsigned char c : chunk) sym.push_back(c);
  while (sym.size() > 1) {
    TokenId best = -1;
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      auto it = rank_.find(pack(sym[i], sym[i + 1]));
      if (it != rank_.end() && (best < 0 || it->second < best)) best = it->second;
    }
    if (best < 0) break;
    const auto [a, b] = merges_[best - kMinVocabSize];
    std::size_t w = 0;
    for (std::size_t r = 0; r < sym.size();) {
      if (r + 1 < sym.size() && sym[r] == a && sym[r + 1] == b) {
        sym[w++] = best;
        r += 2;
      } else {
        sym[w++] = sym[r++];
      }
    }
    sym.resize(w);
  }
  out.insert(out.end(), sym.begin(), sym.end());
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (auto chunk : pretokenize(text)) encode_chunk(chunk, out);
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string s;
  for (TokenId id : ids) s += token_bytes(id);
  return s;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (auto [a, b] : merges_) merges.push_back({a, b});
  return {
      {"format", kVocabFormat},
      {"version", kVocabFormatVersion},
      {"vocab_size", size()},
      {"specials", {{"bos", kBos}, {"eos", kEos}, {"pad", kPad}}},
      {"merges", merges},
  };
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kVocabFormat) {
      throw DataError("not a vocabulary file (format tag mismatch)");
    }
    if (j.at("version").get<int>() != kVocabFormatVersion) {
      throw DataError("unsupported vocabulary version " + j.at("version").dump());
    }
    const auto& sp = j.at("specials");
    if (sp.at("bos").get<int>() != kBos || sp.at("eos").get<int>() != kEos ||
        sp.at("pad").get<int>() != kPad) {
      throw DataError("vocabulary specials do not match this build");
    }
    std::vector<std::pair<TokenId, TokenId>> merges;
    for (const auto& m : j.at("merges")) merges.emplace_back(m.at(0).get<int>(), m.at(1).get<int>());
    Vocab v(std::move(merges));
    if (j.at("vocab_size").get<std::size_t>() != v.size()) {
      throw DataError("vocab_size does not match merge count");
    }
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary: ") + e.what());
  }
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary to " + path.string());
  out << to_json().dump() << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read vocabulary " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed vocabulary " + path.string() + ": " + e.what());
  }
}

Vocab train_bpe(std::span<const std::string> texts, std::size_t vocab_size, std::uint64_t) {
  if (vocab_size < kMinVocabSize) {
    throw ConfigError("vocab_size must be at least " + std::to_string(kMinVocabSize) +
                      ", got " + std::to_string(vocab_size));
  }
  std::map<std::string, std::int64_t> word_freq;
  for (const auto& t : texts) {
    for (auto chunk : pretokenize(t)) ++word_freq[std::string(chunk)];
  }
  std::vector<std::vector<TokenId>> words;
  std::vector<std::int64_t> freqs;
  for (const auto& [w, f] : word_freq) {
    std::vector<TokenId> sym;
    for (unsigned char c : w) sym.push_back(c);
    words.push_back(std::move(sym));
    freqs.push_back(f);
  }

  std::vector<std::string> bytes;
  for (int b = 0; b < kByteTokens; ++b) bytes.emplace_back(1, static_cast<char>(b));
  for (TokenId s = kBos; s <= kPad; ++s) bytes.emplace_back();

  std::vector<std::pair<TokenId, TokenId>> merges;
  while (kMinVocabSize + merges.size() < vocab_size) {
    std::unordered_map<std::uint64_t, std::int64_t> counts;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& sym = words[w];
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) counts[pack(sym[i], sym[i + 1])] += freqs[w];
    }
    // Distinct ids have distinct bytes, so this order is total and the
    // result does not depend on hash iteration order.
    bool found = false;
    TokenId a = 0, b = 0;
    std::int64_t best_count = 0;
    for (const auto& [key, c] : counts) {
      if (c < 2) continue;
      const auto l = static_cast<TokenId>(key >> 32);
      const auto r = static_cast<TokenId>(key & 0xffffffffu);
      if (!found || c > best_count ||
          (c == best_count && std::tie(bytes[l], bytes[r]) < std::tie(bytes[a], bytes[b]))) {
        found = true;
        a = l;
        b = r;
        best_count = c;
      }
    }
    if (!found) break;
    const TokenId merged = static_cast<TokenId>(kMinVocabSize + merges.size());
    merges.emplace_back(a, b);
    bytes.push_back(bytes[a] + bytes[b]);
    for (auto& sym : words) {
      std::size_t w = 0;
      for (std::size_t r = 0; r < sym.size();) {
        if (r + 1 < sym.size() && sym[r] == a && sym[r + 1] == b) {
          sym[w++] = merged;
          r += 2;
        } else {
          sym[w++] = sym[r++];
        }
      }
      sym.resize(w);
    }
  }
  return Vocab(std::move(merges));
}

}  // namespace ptune::bpe
