// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ptune/error.hpp"
#include "ptune/prompt.hpp"
#include "ptune/rng.hpp"

namespace ptune::gen {

void GenerationConfig::validate() const {
  if (top_k < 1) throw ConfigError("top_k must be at least 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be at least 1");
}

nlohmann::json GenerationConfig::to_json() const {
  return {{"top_k", top_k},
          {"top_p", top_p},
          {"temperature", temperature},
          {"max_new_tokens", max_new_tokens},
          {"seed", seed},
          {"use_cache", use_cache}};
}

GenerationConfig GenerationConfig::from_json(const nlohmann::json& j) {
  GenerationConfig c;
  try {
    c.top_k = j.value("top_k", c.top_k);
    c.top_p = j.value("top_p", c.top_p);
    c.temperature = j.value("temperature", c.temperature);
    c.max_new_tokens = j.value("max_new_tokens", c.max_new_tokens);
    c.seed = j.value("seed", c.seed);
    c.use_cache = j.value("use_cache", c.use_cache);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed generation config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

struct Filtered {
  std::vector<std::size_t> order;  // survivors, descending probability
  std::vector<double> probs;       // renormalized, aligned with order
};

Filtered filter(std::span<const double> logits, const GenerationConfig& config) {
  config.validate();
  const std::size_t n = logits.size();
  if (n == 0) throw ShapeError("filter_distribution of an empty logit vector");
  std::vector<double> p(n);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(logits[i])) throw NumericError("non-finite logit");
    p[i] = logits[i] / config.temperature;
    mx = std::max(mx, p[i]);
  }
  double total = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    total += v;
  }
  for (auto& v : p) v /= total;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  order.resize(std::min(n, static_cast<std::size_t>(config.top_k)));

  double kept = 0.0;
  for (auto i : order) kept += p[i];
  double cum = 0.0;
  std::size_t cut = order.size();
  for (std::size_t r = 0; r < order.size(); ++r) {
    cum += p[order[r]] / kept;
    if (cum >= config.top_p) {
      cut = r + 1;
      break;
    }
  }
  order.resize(cut);

  Filtered f;
  double mass = 0.0;
  for (auto i : order) mass += p[i];
  for (auto i : order) f.probs.push_back(p[i] / mass);
  f.order = std::move(order);
  return f;
}

template <typename T>
std::size_t sample(std::span<const T> logits, const GenerationConfig& config, Rng& rng) {
  std::vector<double> l(logits.begin(), logits.end());
  const auto f = filter(l, config);
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t r = 0; r < f.order.size(); ++r) {
    cum += f.probs[r];
    if (u < cum) return f.order[r];
  }
  return f.order.back();
}

}  // namespace

std::vector<double> filter_distribution(std::span<const double> logits,
                                        const GenerationConfig& config) {
  const auto f = filter(logits, config);
  std::vector<double> out(logits.size(), 0.0);
  for (std::size_t r = 0; r < f.order.size(); ++r) out[f.order[r]] = f.probs[r];
  return out;
}

std::vector<std::size_t> nucleus_support(std::span<const double> logits,
                                         const GenerationConfig& config) {
  return filter(logits, config).order;
}

template <typename T>
std::vector<bpe::TokenId> generate_ids(const model::Transformer<T>& weights,
                                       const ag::Tensor<T>* virtual_emb,
                                       std::span<const bpe::TokenId> prompt,
                                       const GenerationConfig& config) {
  config.validate();
  const auto& mc = weights.config();
  const std::size_t d = mc.d_model;
  const std::size_t m = virtual_emb ? virtual_emb->rows() : 0;
  if (virtual_emb && (virtual_emb->rank() != 2 || virtual_emb->cols() != d)) {
    throw ShapeError("virtual embeddings must be [m x " + std::to_string(d) + "]");
  }
  const std::size_t prefix = m + prompt.size();
  if (prefix == 0) throw ShapeError("generation needs a non-empty prefix");
  if (prefix + static_cast<std::size_t>(config.max_new_tokens) - 1 >
      static_cast<std::size_t>(mc.max_positions)) {
    throw ShapeError("context overflow: prefix of " + std::to_string(prefix) + " plus " +
                     std::to_string(config.max_new_tokens) + " new tokens exceeds max_positions " +
                     std::to_string(mc.max_positions));
  }
  for (auto id : prompt) {
    if (id < 0 || id >= mc.vocab_size) throw DataError("prompt token outside the model vocabulary");
  }
  Rng rng(config.seed);
  std::vector<bpe::TokenId> out;
  const T* table = weights.token_embedding().data().data();
  auto token_row = [&](bpe::TokenId id) { return std::span<const T>(table + id * d, d); };

  if (config.use_cache) {
    auto state = weights.start_decode();
    std::vector<T> logits;
    for (std::size_t r = 0; r < m; ++r) {
      logits = weights.decode_step(state, virtual_emb->data().subspan(r * d, d));
    }
    for (auto id : prompt) logits = weights.decode_step(state, token_row(id));
    for (int step = 0; step < config.max_new_tokens; ++step) {
      const auto next = static_cast<bpe::TokenId>(sample<T>(logits, config, rng));
      if (next == bpe::kEos) break;
      out.push_back(next);
      if (step + 1 < config.max_new_tokens) logits = weights.decode_step(state, token_row(next));
    }
    return out;
  }

  std::vector<bpe::TokenId> ids(prompt.begin(), prompt.end());
  const std::size_t v = mc.vocab_size;
  for (int step = 0; step < config.max_new_tokens; ++step) {
    auto emb = weights.embed(std::span<const std::int32_t>(ids));
    auto inputs = virtual_emb ? ag::concat(std::vector<ag::Tensor<T>>{*virtual_emb, emb}, 0) : emb;
    const auto logits = weights.forward(inputs.detach());
    const auto last = logits.data().subspan((logits.rows() - 1) * v, v);
    const auto next = static_cast<bpe::TokenId>(sample<T>(last, config, rng));
    if (next == bpe::kEos) break;
    out.push_back(next);
    ids.push_back(next);
  }
  return out;
}

template std::vector<bpe::TokenId> generate_ids(const model::Transformer<float>&,
                                                const ag::Tensor<float>*,
                                                std::span<const bpe::TokenId>,
                                                const GenerationConfig&);
template std::vector<bpe::TokenId> generate_ids(const model::Transformer<double>&,
                                                const ag::Tensor<double>*,
                                                std::span<const bpe::TokenId>,
                                                const GenerationConfig&);

namespace {

// Byte-level tokens can stop mid character; swap broken sequences for U+FFFD.
std::string valid_utf8(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 0;
    bool ok = len > 0 && i + len <= s.size() && !(len == 2 && c < 0xC2);
    for (std::size_t j = 1; ok && j < len; ++j) {
      ok = (static_cast<unsigned char>(s[i + j]) & 0xC0) == 0x80;
    }
    if (ok && len == 3) {
      const auto c1 = static_cast<unsigned char>(s[i + 1]);
      ok = !(c == 0xE0 && c1 < 0xA0) && !(c == 0xED && c1 >= 0xA0);
    }
    if (ok && len == 4) {
      const auto c1 = static_cast<unsigned char>(s[i + 1]);
      ok = c <= 0xF4 && !(c == 0xF0 && c1 < 0x90) && !(c == 0xF4 && c1 >= 0x90);
    }
    if (ok) {
      out.append(s, i, len);
      i += len;
    } else {
      out += "\xEF\xBF\xBD";
      ++i;
    }
  }
  return out;
}

}  // namespace

std::string generate(const model::Transformer<float>& weights, const ag::Tensor<float>* virtual_emb,
                     const bpe::Vocab& vocab, std::string_view dialogue,
                     const GenerationConfig& config) {
  const auto tt = prompt::encode_template(vocab, dialogue, std::nullopt, prompt::Mode::kInfer);
  const auto ids = generate_ids(weights, virtual_emb, tt.frame, config);
  std::vector<bpe::TokenId> visible;
  for (auto id : ids) {
    if (!vocab.is_special(id) && static_cast<std::size_t>(id) < vocab.size()) visible.push_back(id);
  }
  return valid_utf8(vocab.decode(visible));
}

}  // namespace ptune::gen
