// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/prompt.hpp"

#include <cmath>

#include "ptune/error.hpp"
#include "ptune/rng.hpp"

namespace ptune::prompt {

namespace {

constexpr std::string_view kEncoderKind = "prompt_encoder";
constexpr std::string_view kFoldedKind = "prompt_folded";

template <typename T>
void fill_uniform(ag::Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

std::size_t lstm_input_width(const PromptEncoderConfig& c, int layer) {
  return layer == 0 ? static_cast<std::size_t>(c.input_embed_dim)
                    : static_cast<std::size_t>(c.lstm_hidden);
}

}  // namespace

std::string to_string(EncoderType t) { return t == EncoderType::kMlp ? "mlp" : "lstm"; }

EncoderType encoder_type_from_string(std::string_view s) {
  if (s == "mlp" || s == "MLP") return EncoderType::kMlp;
  if (s == "lstm" || s == "LSTM") return EncoderType::kLstm;
  throw ConfigError("unknown encoder type '" + std::string(s) + "' (expected mlp or lstm)");
}

PromptEncoderConfig PromptEncoderConfig::resolved() const {
  PromptEncoderConfig c = *this;
  if (c.input_embed_dim == 0) c.input_embed_dim = c.model_dim;
  if (c.mlp_hidden == 0) c.mlp_hidden = c.model_dim;
  return c;
}

void PromptEncoderConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(num_virtual_tokens, "num_virtual_tokens");
  positive(model_dim, "model_dim");
  if (input_embed_dim < 0) throw ConfigError("input_embed_dim must be positive");
  if (encoder_type == EncoderType::kMlp) {
    if (mlp_hidden < 0) throw ConfigError("mlp_hidden must be positive");
  } else {
    positive(lstm_layers, "lstm_layers");
    positive(lstm_hidden, "lstm_hidden");
    if (lstm_hidden % 2 != 0) throw ConfigError("lstm_hidden must be even");
  }
}

nlohmann::json PromptEncoderConfig::to_json() const {
  return {{"num_virtual_tokens", num_virtual_tokens},
          {"encoder_type", to_string(encoder_type)},
          {"input_embed_dim", input_embed_dim},
          {"lstm_layers", lstm_layers},
          {"lstm_hidden", lstm_hidden},
          {"mlp_hidden", mlp_hidden},
          {"model_dim", model_dim}};
}

PromptEncoderConfig PromptEncoderConfig::from_json(const nlohmann::json& j) {
  PromptEncoderConfig c;
  try {
    c.num_virtual_tokens = j.value("num_virtual_tokens", c.num_virtual_tokens);
    c.encoder_type = encoder_type_from_string(j.value("encoder_type", to_string(c.encoder_type)));
    c.input_embed_dim = j.value("input_embed_dim", c.input_embed_dim);
    c.lstm_layers = j.value("lstm_layers", c.lstm_layers);
    c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
    c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
    c.model_dim = j.value("model_dim", c.model_dim);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed prompt encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t closed_form_parameter_count(const PromptEncoderConfig& config) {
  config.validate();
  const auto c = config.resolved();
  const std::size_t m = c.num_virtual_tokens, e = c.input_embed_dim, hdim = c.model_dim;
  std::size_t n = m * e;
  if (c.encoder_type == EncoderType::kMlp) {
    const std::size_t k = c.mlp_hidden;
    return n + (e * k + k) + (k * hdim + hdim);
  }
  const std::size_t lh = c.lstm_hidden, h = lh / 2;
  for (int l = 0; l < c.lstm_layers; ++l) {
    const std::size_t in = lstm_input_width(c, l);
    n += 2 * (in * 4 * h + h * 4 * h + 4 * h);
  }
  return n + (lh * lh + lh) + (lh * hdim + hdim);
}

template <typename T>
PromptEncoder<T>::PromptEncoder(const PromptEncoderConfig& config) {
  config.validate();
  config_ = config.resolved();
  using Tn = ag::Tensor<T>;
  const std::size_t m = config_.num_virtual_tokens, e = config_.input_embed_dim,
                    hdim = config_.model_dim;
  virtual_input_ = Tn::zeros({m, e}, true);
  std::size_t head_in = 0, head_hidden = 0;
  if (config_.encoder_type == EncoderType::kMlp) {
    head_in = e;
    head_hidden = config_.mlp_hidden;
  } else {
    const std::size_t h = config_.lstm_hidden / 2;
    lstm_.resize(config_.lstm_layers);
    for (int l = 0; l < config_.lstm_layers; ++l) {
      const std::size_t in = lstm_input_width(config_, l);
      for (int d = 0; d < 2; ++d) {
        lstm_[l].push_back({Tn::zeros({in, 4 * h}, true), Tn::zeros({h, 4 * h}, true),
                            Tn::zeros({4 * h}, true)});
      }
    }
    head_in = head_hidden = config_.lstm_hidden;
  }
  w1_ = Tn::zeros({head_in, head_hidden}, true);
  b1_ = Tn::zeros({head_hidden}, true);
  w2_ = Tn::zeros({head_hidden, hdim}, true);
  b2_ = Tn::zeros({hdim}, true);
}

template <typename T>
PromptEncoder<T> PromptEncoder<T>::init(const PromptEncoderConfig& config, std::uint64_t seed) {
  PromptEncoder enc(config);
  Rng rng(seed);
  for (auto& v : enc.virtual_input_.data()) v = static_cast<T>(rng.normal());
  if (!enc.lstm_.empty()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(enc.config_.lstm_hidden / 2));
    for (auto& layer : enc.lstm_) {
      for (auto& dir : layer) {
        fill_uniform(dir.w_ih, bound, rng);
        fill_uniform(dir.w_hh, bound, rng);
        fill_uniform(dir.bias, bound, rng);
      }
    }
  }
  const double b1 = 1.0 / std::sqrt(static_cast<double>(enc.w1_.shape()[0]));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(enc.w2_.shape()[0]));
  fill_uniform(enc.w1_, b1, rng);
  fill_uniform(enc.b1_, b1, rng);
  fill_uniform(enc.w2_, b2, rng);
  fill_uniform(enc.b2_, b2, rng);
  return enc;
}

template <typename T>
std::vector<model::NamedTensor<T>> PromptEncoder<T>::parameters() const {
  std::vector<model::NamedTensor<T>> out;
  out.push_back({"virtual_input_embedding", virtual_input_});
  for (std::size_t l = 0; l < lstm_.size(); ++l) {
    for (std::size_t d = 0; d < 2; ++d) {
      const std::string p =
          "lstm." + std::to_string(l) + (d == 0 ? ".forward." : ".backward.");
      out.push_back({p + "w_ih", lstm_[l][d].w_ih});
      out.push_back({p + "w_hh", lstm_[l][d].w_hh});
      out.push_back({p + "bias", lstm_[l][d].bias});
    }
  }
  out.push_back({"head.w1", w1_});
  out.push_back({"head.b1", b1_});
  out.push_back({"head.w2", w2_});
  out.push_back({"head.b2", b2_});
  return out;
}

template <typename T>
ag::Tensor<T> PromptEncoder<T>::run_direction(const ag::Tensor<T>& input,
                                              const LstmDirection<T>& dir, bool reverse) const {
  const std::size_t m = input.rows();
  const std::size_t h = config_.lstm_hidden / 2;
  const auto xw = ag::add_bias(ag::matmul(input, dir.w_ih), dir.bias);
  std::vector<ag::Tensor<T>> outputs(m);
  ag::Tensor<T> h_prev, c_prev;
  for (std::size_t s = 0; s < m; ++s) {
    const std::size_t t = reverse ? m - 1 - s : s;
    auto gates = ag::slice(xw, 0, t, t + 1);
    if (s > 0) gates = ag::add(gates, ag::matmul(h_prev, dir.w_hh));
    const auto i = ag::sigmoid(ag::slice(gates, 1, 0, h));
    const auto f = ag::sigmoid(ag::slice(gates, 1, h, 2 * h));
    const auto g = ag::tanh(ag::slice(gates, 1, 2 * h, 3 * h));
    const auto o = ag::sigmoid(ag::slice(gates, 1, 3 * h, 4 * h));
    auto c = ag::mul(i, g);
    if (s > 0) c = ag::add(ag::mul(f, c_prev), c);
    h_prev = ag::mul(o, ag::tanh(c));
    c_prev = c;
    outputs[t] = h_prev;
  }
  return ag::concat(outputs, 0);
}

template <typename T>
ag::Tensor<T> PromptEncoder<T>::virtual_embeddings() const {
  ag::Tensor<T> x = virtual_input_;
  for (const auto& layer : lstm_) {
    x = ag::concat(std::vector<ag::Tensor<T>>{run_direction(x, layer[0], false),
                                              run_direction(x, layer[1], true)},
                   1);
  }
  return ag::add_bias(ag::matmul(ag::tanh(ag::add_bias(ag::matmul(x, w1_), b1_)), w2_), b2_);
}

template <typename T>
template <typename U>
PromptEncoder<U> PromptEncoder<T>::cast() const {
  PromptEncoder<U> out(config_);
  auto src = parameters();
  auto dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].tensor.data();
    auto d = dst[i].tensor.data();
    for (std::size_t k = 0; k < s.size(); ++k) d[k] = static_cast<U>(s[k]);
  }
  return out;
}

template class PromptEncoder<float>;
template class PromptEncoder<double>;
template PromptEncoder<double> PromptEncoder<float>::cast<double>() const;
template PromptEncoder<float> PromptEncoder<double>::cast<float>() const;

checkpoint::Container to_container(const PromptEncoder<float>& encoder, std::uint64_t seed,
                                   std::int64_t step) {
  checkpoint::Container c;
  c.kind = kEncoderKind;
  c.config = encoder.config().to_json();
  c.seed = seed;
  c.step = step;
  for (const auto& p : encoder.parameters()) {
    auto d = p.tensor.data();
    c.arrays.push_back({p.name, p.tensor.shape(), std::vector<float>(d.begin(), d.end())});
  }
  return c;
}

PromptEncoder<float> encoder_from_container(const checkpoint::Container& c) {
  if (c.kind != kEncoderKind) {
    throw DataError("checkpoint holds '" + c.kind + "', expected a prompt encoder");
  }
  PromptEncoder<float> enc(PromptEncoderConfig::from_json(c.config));
  auto params = enc.parameters();
  if (c.arrays.size() != params.size()) {
    throw DataError("checkpoint array count does not match the prompt encoder config");
  }
  for (auto& p : params) {
    const auto& a = c.array(p.name);
    if (a.shape != p.tensor.shape()) {
      throw DataError("checkpoint array '" + p.name + "' has shape " + ag::shape_string(a.shape) +
                      ", config expects " + ag::shape_string(p.tensor.shape()));
    }
    std::copy(a.values.begin(), a.values.end(), p.tensor.data().begin());
  }
  return enc;
}

checkpoint::Container folded_container(const PromptEncoder<float>& encoder, std::uint64_t seed,
                                       std::int64_t step) {
  checkpoint::Container c;
  c.kind = kFoldedKind;
  c.config = encoder.config().to_json();
  c.seed = seed;
  c.step = step;
  const auto v = encoder.virtual_embeddings();
  auto d = v.data();
  c.arrays.push_back({"virtual_embeddings", v.shape(), std::vector<float>(d.begin(), d.end())});
  return c;
}

ag::Tensor<float> load_virtual_embeddings(const std::filesystem::path& path) {
  const auto c = checkpoint::read(path);
  if (c.kind == kEncoderKind) return encoder_from_container(c).virtual_embeddings().detach();
  if (c.kind == kFoldedKind) {
    const auto& a = c.array("virtual_embeddings");
    if (a.shape.size() != 2) throw DataError("folded prompt must be a matrix");
    return ag::Tensor<float>::from(a.shape, a.values);
  }
  throw DataError(path.string() + " holds '" + c.kind + "', not a prompt");
}

// ---- template assembly ----------------------------------------------------

std::string frame_text(std::string_view dialogue) {
  std::string s(kInputPrefix);
  s += dialogue;
  s += kOutputMarker;
  return s;
}

TemplateTokens encode_template(const bpe::Vocab& vocab, std::string_view dialogue,
                               const std::optional<std::string>& summary, Mode mode) {
  TemplateTokens t;
  t.frame = vocab.encode(frame_text(dialogue));
  if (mode == Mode::kTrain) {
    if (!summary) throw DataError("train-mode assembly requires a summary");
    t.output = vocab.encode(*summary);
    t.output.push_back(bpe::kEos);
  }
  return t;
}

template <typename T>
AssembledSequence<T> assemble(const ag::Tensor<T>& virtual_emb, const bpe::Vocab& vocab,
                              const model::Transformer<T>& weights, std::string_view dialogue,
                              const std::optional<std::string>& summary, Mode mode) {
  const auto tt = encode_template(vocab, dialogue, summary, mode);
  const std::size_t d = weights.config().d_model;
  if (virtual_emb.rank() != 2 || virtual_emb.cols() != d) {
    throw ShapeError("virtual embeddings must be [m x " + std::to_string(d) + "]");
  }
  AssembledSequence<T> a;
  a.virtual_len = virtual_emb.rows();
  a.frame_len = tt.frame.size();
  a.output_len = tt.output.size();
  const std::size_t len = a.virtual_len + a.frame_len + a.output_len;
  if (len > static_cast<std::size_t>(weights.config().max_positions)) {
    throw ShapeError("assembled sequence of length " + std::to_string(len) +
                     " exceeds max_positions " + std::to_string(weights.config().max_positions));
  }
  std::vector<bpe::TokenId> ids = tt.frame;
  ids.insert(ids.end(), tt.output.begin(), tt.output.end());
  a.embeddings = ag::concat(
      std::vector<ag::Tensor<T>>{virtual_emb, weights.embed(std::span<const std::int32_t>(ids))}, 0);
  a.tokens.assign(a.virtual_len, -1);
  a.tokens.insert(a.tokens.end(), ids.begin(), ids.end());
  a.loss_mask.assign(len, 0);
  for (std::size_t p = a.virtual_len + a.frame_len; p < len; ++p) a.loss_mask[p] = 1;
  return a;
}

template <typename T>
Batch<T> assemble_batch(const ag::Tensor<T>* virtual_emb, const model::Transformer<T>& weights,
                        std::span<const TemplateTokens> items) {
  if (items.empty()) throw DataError("empty batch");
  const std::size_t m = virtual_emb ? virtual_emb->rows() : 0;
  std::size_t seq = 0;
  for (const auto& it : items) seq = std::max(seq, m + it.frame.size() + it.output.size());
  if (seq > static_cast<std::size_t>(weights.config().max_positions)) {
    throw ShapeError("assembled sequence of length " + std::to_string(seq) +
                     " exceeds max_positions " + std::to_string(weights.config().max_positions));
  }
  Batch<T> b;
  b.batch = items.size();
  b.seq = seq;
  b.targets.assign(b.batch * seq, 0);
  b.loss_mask.assign(b.batch * seq, 0);
  std::vector<ag::Tensor<T>> rows;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& it = items[i];
    std::vector<std::int32_t> ids = it.frame;
    ids.insert(ids.end(), it.output.begin(), it.output.end());
    const std::size_t used = m + ids.size();
    ids.resize(seq - m, bpe::kPad);
    if (virtual_emb) rows.push_back(*virtual_emb);
    rows.push_back(weights.embed(std::span<const std::int32_t>(ids)));
    const std::size_t out_begin = m + it.frame.size();
    for (std::size_t p = 0; p + 1 < used; ++p) {
      if (p + 1 >= out_begin) {
        b.targets[i * seq + p] = ids[p + 1 - m];
        b.loss_mask[i * seq + p] = 1;
      }
    }
  }
  b.embeddings = rows.size() == 1 ? rows[0] : ag::concat(rows, 0);
  return b;
}

template AssembledSequence<float> assemble(const ag::Tensor<float>&, const bpe::Vocab&,
                                           const model::Transformer<float>&, std::string_view,
                                           const std::optional<std::string>&, Mode);
template AssembledSequence<double> assemble(const ag::Tensor<double>&, const bpe::Vocab&,
                                            const model::Transformer<double>&, std::string_view,
                                            const std::optional<std::string>&, Mode);
template Batch<float> assemble_batch(const ag::Tensor<float>*, const model::Transformer<float>&,
                                     std::span<const TemplateTokens>);
template Batch<double> assemble_batch(const ag::Tensor<double>*, const model::Transformer<double>&,
                                      std::span<const TemplateTokens>);

}  // namespace ptune::prompt
