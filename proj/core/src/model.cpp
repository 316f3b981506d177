// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/model.hpp"

#include <cmath>

#include "ptune/digest.hpp"
#include "ptune/error.hpp"
#include "ptune/kernels.hpp"
#include "ptune/rng.hpp"

namespace ptune::model {

namespace {

constexpr double kInitStd = 0.02;

template <typename T>
ag::Tensor<T> linear(const ag::Tensor<T>& x, const ag::Tensor<T>& w, const ag::Tensor<T>& b) {
  return ag::add_bias(ag::matmul(x, w), b);
}

template <typename T>
void fill_normal(ag::Tensor<T>& t, Rng& rng) {
  for (auto& v : t.data()) v = static_cast<T>(rng.normal(0.0, kInitStd));
}

// Row-vector affine map out = x * w + b for the decode path, mirroring
// linear() element for element.
template <typename T>
void affine_row(const T* x, const ag::Tensor<T>& w, const ag::Tensor<T>& b, T* out) {
  const std::size_t in = w.shape()[0], n = w.shape()[1];
  std::fill(out, out + n, T(0));
  kernels::gemm_nn(x, w.data().data(), out, 1, in, n);
  kernels::add_bias_row(b.data().data(), out, n);
}

}  // namespace

void TransformerConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(d_model, "d_model");
  positive(d_ffn, "d_ffn");
  positive(vocab_size, "vocab_size");
  positive(max_positions, "max_positions");
  if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  if (d_model < 2) throw ConfigError("d_model must be at least 2");
}

TransformerConfig TransformerConfig::toy_s(int vocab_size) {
  return {2, 4, 64, 256, vocab_size, 256};
}

TransformerConfig TransformerConfig::toy_m(int vocab_size) {
  return {4, 4, 128, 512, vocab_size, 256};
}

TransformerConfig TransformerConfig::preset(std::string_view name, int vocab_size) {
  if (name == "toy-S" || name == "toy-s") return toy_s(vocab_size);
  if (name == "toy-M" || name == "toy-m") return toy_m(vocab_size);
  throw ConfigError("unknown model preset '" + std::string(name) + "' (expected toy-S or toy-M)");
}

nlohmann::json TransformerConfig::to_json() const {
  return {{"n_layers", n_layers},     {"n_heads", n_heads},       {"d_model", d_model},
          {"d_ffn", d_ffn},           {"vocab_size", vocab_size}, {"max_positions", max_positions}};
}

TransformerConfig TransformerConfig::from_json(const nlohmann::json& j) {
  TransformerConfig c;
  try {
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.d_ffn = j.at("d_ffn").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed transformer config: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t closed_form_parameter_count(const TransformerConfig& c) {
  const std::size_t d = c.d_model, f = c.d_ffn, v = c.vocab_size, p = c.max_positions;
  const std::size_t per_layer = 4 * (d * d + d)  // attention projections
                                + (d * f + f) + (f * d + d)  // feed-forward
                                + 4 * d;  // two layer norms
  return v * d + p * d + static_cast<std::size_t>(c.n_layers) * per_layer + 2 * d;
}

template <typename T>
Transformer<T>::Transformer(const TransformerConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model, f = config_.d_ffn;
  using Tn = ag::Tensor<T>;
  token_embedding_ = Tn::zeros({static_cast<std::size_t>(config_.vocab_size), d}, true);
  position_embedding_ = Tn::zeros({static_cast<std::size_t>(config_.max_positions), d}, true);
  layers_.resize(config_.n_layers);
  for (auto& l : layers_) {
    l.ln1_gain = Tn::full({d}, T(1), true);
    l.ln1_bias = Tn::zeros({d}, true);
    l.wq = Tn::zeros({d, d}, true);
    l.bq = Tn::zeros({d}, true);
    l.wk = Tn::zeros({d, d}, true);
    l.bk = Tn::zeros({d}, true);
    l.wv = Tn::zeros({d, d}, true);
    l.bv = Tn::zeros({d}, true);
    l.wo = Tn::zeros({d, d}, true);
    l.bo = Tn::zeros({d}, true);
    l.ln2_gain = Tn::full({d}, T(1), true);
    l.ln2_bias = Tn::zeros({d}, true);
    l.w_up = Tn::zeros({d, f}, true);
    l.b_up = Tn::zeros({f}, true);
    l.w_down = Tn::zeros({f, d}, true);
    l.b_down = Tn::zeros({d}, true);
  }
  final_gain_ = Tn::full({d}, T(1), true);
  final_bias_ = Tn::zeros({d}, true);
}

template <typename T>
Transformer<T> Transformer<T>::init(const TransformerConfig& config, std::uint64_t seed) {
  Transformer m(config);
  Rng rng(seed);
  fill_normal(m.token_embedding_, rng);
  fill_normal(m.position_embedding_, rng);
  for (auto& l : m.layers_) {
    for (auto* w : {&l.wq, &l.wk, &l.wv, &l.wo, &l.w_up, &l.w_down}) fill_normal(*w, rng);
  }
  return m;
}

template <typename T>
void Transformer<T>::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : parameters()) p.tensor.set_requires_grad(!frozen);
}

template <typename T>
std::vector<NamedTensor<T>> Transformer<T>::parameters() const {
  std::vector<NamedTensor<T>> out;
  out.push_back({"token_embedding", token_embedding_});
  out.push_back({"position_embedding", position_embedding_});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    out.push_back({p + "ln1.gain", l.ln1_gain});
    out.push_back({p + "ln1.bias", l.ln1_bias});
    out.push_back({p + "attn.wq", l.wq});
    out.push_back({p + "attn.bq", l.bq});
    out.push_back({p + "attn.wk", l.wk});
    out.push_back({p + "attn.bk", l.bk});
    out.push_back({p + "attn.wv", l.wv});
    out.push_back({p + "attn.bv", l.bv});
    out.push_back({p + "attn.wo", l.wo});
    out.push_back({p + "attn.bo", l.bo});
    out.push_back({p + "ln2.gain", l.ln2_gain});
    out.push_back({p + "ln2.bias", l.ln2_bias});
    out.push_back({p + "ffn.w_up", l.w_up});
    out.push_back({p + "ffn.b_up", l.b_up});
    out.push_back({p + "ffn.w_down", l.w_down});
    out.push_back({p + "ffn.b_down", l.b_down});
  }
  out.push_back({"final_ln.gain", final_gain_});
  out.push_back({"final_ln.bias", final_bias_});
  return out;
}

template <typename T>
ag::Tensor<T> Transformer<T>::embed(std::span<const std::int32_t> ids) const {
  return ag::embedding_lookup(token_embedding_, ids);
}

template <typename T>
ag::Tensor<T> Transformer<T>::forward(const ag::Tensor<T>& inputs, std::size_t batch) const {
  const std::size_t d = config_.d_model;
  if (inputs.rank() != 2 || inputs.cols() != d) {
    throw ShapeError("forward expects [rows x " + std::to_string(d) + "] embeddings, got " +
                     ag::shape_string(inputs.shape()));
  }
  if (batch == 0 || inputs.rows() % batch != 0) {
    throw ShapeError("forward: rows not divisible by batch size");
  }
  const std::size_t seq = inputs.rows() / batch;
  if (seq > static_cast<std::size_t>(config_.max_positions)) {
    throw ShapeError("sequence of length " + std::to_string(seq) + " exceeds max_positions " +
                     std::to_string(config_.max_positions));
  }
  std::vector<std::int32_t> pos(inputs.rows());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < seq; ++t) pos[b * seq + t] = static_cast<std::int32_t>(t);
  }
  auto x = ag::add(inputs, ag::embedding_lookup(position_embedding_, std::span<const std::int32_t>(pos)));
  for (const auto& l : layers_) {
    auto h = ag::layer_norm(x, l.ln1_gain, l.ln1_bias);
    auto q = linear(h, l.wq, l.bq);
    auto k = linear(h, l.wk, l.bk);
    auto v = linear(h, l.wv, l.bv);
    auto a = ag::causal_attention(q, k, v, batch, static_cast<std::size_t>(config_.n_heads));
    x = ag::add(x, linear(a, l.wo, l.bo));
    auto h2 = ag::layer_norm(x, l.ln2_gain, l.ln2_bias);
    x = ag::add(x, linear(ag::gelu(linear(h2, l.w_up, l.b_up)), l.w_down, l.b_down));
  }
  x = ag::layer_norm(x, final_gain_, final_bias_);
  return ag::matmul_bt(x, token_embedding_);
}

template <typename T>
DecodeState<T> Transformer<T>::start_decode() const {
  DecodeState<T> s;
  s.keys.resize(layers_.size());
  s.values.resize(layers_.size());
  return s;
}

template <typename T>
std::vector<T> Transformer<T>::decode_step(DecodeState<T>& state,
                                           std::span<const T> embedding_row) const {
  const std::size_t d = config_.d_model, f = config_.d_ffn, heads = config_.n_heads;
  const std::size_t hd = d / heads;
  const std::size_t t = state.length;
  if (embedding_row.size() != d) throw ShapeError("decode_step: embedding width mismatch");
  if (t >= static_cast<std::size_t>(config_.max_positions)) {
    throw ShapeError("decode_step: position " + std::to_string(t) + " exceeds max_positions");
  }
  if (state.keys.size() != layers_.size()) throw Error("decode state was not started for this model");

  std::vector<T> x(d), h(d), q(d), a(d), o(d), up(f), probs(t + 1);
  const T* pos = position_embedding_.data().data() + t * d;
  for (std::size_t j = 0; j < d; ++j) x[j] = embedding_row[j] + pos[j];
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));

  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const auto& l = layers_[li];
    kernels::layer_norm_row(x.data(), l.ln1_gain.data().data(), l.ln1_bias.data().data(),
                            h.data(), static_cast<T*>(nullptr), d, T(1e-5));
    affine_row(h.data(), l.wq, l.bq, q.data());
    auto& keys = state.keys[li];
    auto& values = state.values[li];
    keys.resize((t + 1) * d);
    values.resize((t + 1) * d);
    affine_row(h.data(), l.wk, l.bk, keys.data() + t * d);
    affine_row(h.data(), l.wv, l.bv, values.data() + t * d);
    for (std::size_t hh = 0; hh < heads; ++hh) {
      kernels::attend_row(q.data() + hh * hd, keys.data() + hh * hd, values.data() + hh * hd, d,
                          t + 1, hd, scale, probs.data(), a.data() + hh * hd);
    }
    affine_row(a.data(), l.wo, l.bo, o.data());
    for (std::size_t j = 0; j < d; ++j) x[j] = x[j] + o[j];
    kernels::layer_norm_row(x.data(), l.ln2_gain.data().data(), l.ln2_bias.data().data(),
                            h.data(), static_cast<T*>(nullptr), d, T(1e-5));
    affine_row(h.data(), l.w_up, l.b_up, up.data());
    for (auto& u : up) u = kernels::gelu(u);
    affine_row(up.data(), l.w_down, l.b_down, o.data());
    for (std::size_t j = 0; j < d; ++j) x[j] = x[j] + o[j];
  }
  kernels::layer_norm_row(x.data(), final_gain_.data().data(), final_bias_.data().data(), h.data(),
                          static_cast<T*>(nullptr), d, T(1e-5));
  std::vector<T> logits(config_.vocab_size, T(0));
  kernels::gemm_nt(h.data(), token_embedding_.data().data(), logits.data(), 1, d,
                   static_cast<std::size_t>(config_.vocab_size));
  state.length = t + 1;
  return logits;
}

template <typename T>
template <typename U>
Transformer<U> Transformer<T>::cast() const {
  Transformer<U> out(config_);
  auto src = parameters();
  auto dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto s = src[i].tensor.data();
    auto dd = dst[i].tensor.data();
    for (std::size_t k = 0; k < s.size(); ++k) dd[k] = static_cast<U>(s[k]);
  }
  out.set_frozen(frozen_);
  return out;
}

template class Transformer<float>;
template class Transformer<double>;
template Transformer<double> Transformer<float>::cast<double>() const;
template Transformer<float> Transformer<double>::cast<float>() const;
template Transformer<float> Transformer<float>::cast<float>() const;

checkpoint::Container to_container(const Transformer<float>& model, std::uint64_t seed,
                                   std::int64_t step) {
  checkpoint::Container c;
  c.kind = "transformer";
  c.config = model.config().to_json();
  c.config["frozen"] = model.frozen();
  c.seed = seed;
  c.step = step;
  for (const auto& p : model.parameters()) {
    auto d = p.tensor.data();
    c.arrays.push_back({p.name, p.tensor.shape(), std::vector<float>(d.begin(), d.end())});
  }
  return c;
}

Transformer<float> transformer_from_container(const checkpoint::Container& c) {
  if (c.kind != "transformer") {
    throw DataError("checkpoint holds '" + c.kind + "', expected a transformer");
  }
  const auto config = TransformerConfig::from_json(c.config);
  Transformer<float> m(config);
  auto params = m.parameters();
  if (c.arrays.size() != params.size()) {
    throw DataError("checkpoint array count does not match the configured model");
  }
  for (auto& p : params) {
    const auto& a = c.array(p.name);
    if (a.shape != p.tensor.shape()) {
      throw DataError("checkpoint array '" + p.name + "' has shape " + ag::shape_string(a.shape) +
                      ", config expects " + ag::shape_string(p.tensor.shape()));
    }
    std::copy(a.values.begin(), a.values.end(), p.tensor.data().begin());
  }
  m.set_frozen(c.config.value("frozen", false));
  return m;
}

void save_transformer(const std::filesystem::path& path, const Transformer<float>& model,
                      std::uint64_t seed, std::int64_t step) {
  checkpoint::write(path, to_container(model, seed, step));
}

Transformer<float> load_transformer(const std::filesystem::path& path) {
  return transformer_from_container(checkpoint::read(path));
}

template <typename T>
std::string weights_digest(const std::vector<NamedTensor<T>>& params) {
  Sha256 h;
  for (const auto& p : params) {
    h.update(p.name);
    h.update(ag::shape_string(p.tensor.shape()));
    auto d = p.tensor.data();
    h.update(std::as_bytes(d));
  }
  return h.hex_digest();
}

template std::string weights_digest<float>(const std::vector<NamedTensor<float>>&);
template std::string weights_digest<double>(const std::vector<NamedTensor<double>>&);

}  // namespace ptune::model
