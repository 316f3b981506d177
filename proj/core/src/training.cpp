// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "ptune/error.hpp"
#include "ptune/metrics.hpp"
#include "ptune/rng.hpp"

namespace ptune::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename T>
std::vector<ag::Tensor<T>> tensors_of(const std::vector<model::NamedTensor<T>>& named) {
  std::vector<ag::Tensor<T>> out;
  for (const auto& n : named) {
    if (n.tensor.requires_grad()) out.push_back(n.tensor);
  }
  return out;
}

void shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
}

}  // namespace

std::string to_string(TrainMode m) { return m == TrainMode::kPromptTune ? "prompt_tune" : "fine_tune"; }

TrainMode train_mode_from_string(std::string_view s) {
  if (s == "prompt_tune") return TrainMode::kPromptTune;
  if (s == "fine_tune") return TrainMode::kFineTune;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected prompt_tune or fine_tune)");
}

std::string to_string(SelectionMetric m) { return m == SelectionMetric::kValLoss ? "val_loss" : "rougeL"; }

SelectionMetric selection_metric_from_string(std::string_view s) {
  if (s == "val_loss") return SelectionMetric::kValLoss;
  if (s == "rougeL") return SelectionMetric::kRougeL;
  throw ConfigError("unknown selection metric '" + std::string(s) + "' (expected val_loss or rougeL)");
}

void TrainConfig::validate() const {
  if (max_epochs < 1 || max_epochs > 20) throw ConfigError("max_epochs must lie in [1, 20]");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (base_lr <= 0) throw ConfigError("learning rate must be positive");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be non-negative");
  if (min_lr < 0 || min_lr > base_lr) throw ConfigError("min_lr must lie in [0, base_lr]");
  generation.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"max_epochs", max_epochs},     {"batch_size", batch_size},
          {"seed", seed},                 {"selection_metric", to_string(selection_metric)},
          {"learning_rate", base_lr},     {"warmup_steps", warmup_steps},
          {"min_lr", min_lr},             {"clip_norm", clip_norm},
          {"generation", generation.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.selection_metric =
        selection_metric_from_string(j.value("selection_metric", to_string(c.selection_metric)));
    c.base_lr = j.value("learning_rate", c.base_lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("generation")) c.generation = gen::GenerationConfig::from_json(j["generation"]);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  c.validate();
  return c;
}

bool CheckpointSelector::offer(int epoch, double value) {
  const bool better = !best_ || (lower_ ? value < *best_ : value > *best_);
  if (better) {
    best_ = value;
    epoch_ = epoch;
  }
  return better;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_metric", val_metric}, {"lr", lr},
          {"step", step}};
}

template <typename T>
double train_step(const model::Transformer<T>& weights, const prompt::PromptEncoder<T>* encoder,
                  Adam<T>& optimizer, std::vector<ag::Tensor<T>>& trainable,
                  std::span<const prompt::TemplateTokens> batch, double lr, double clip_norm) {
  optimizer.zero_grad();
  ag::Tensor<T> virt;
  if (encoder) virt = encoder->virtual_embeddings();
  const auto b = prompt::assemble_batch(encoder ? &virt : nullptr, weights, batch);
  auto loss = ag::cross_entropy(weights.forward(b.embeddings, b.batch),
                                std::span<const std::int32_t>(b.targets),
                                std::span<const std::uint8_t>(b.loss_mask));
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) throw NumericError("non-finite training loss");
  ag::backward(loss);
  if (clip_norm > 0) clip_grad_norm(trainable, clip_norm);
  optimizer.step(lr);
  return value;
}

template <typename T>
double prompt_tune_step(const model::Transformer<T>& frozen_weights,
                        prompt::PromptEncoder<T>& encoder, Adam<T>& optimizer,
                        std::span<const prompt::TemplateTokens> batch,
                        const ScheduleConfig& schedule, std::int64_t step, double clip_norm) {
  if (!frozen_weights.frozen()) throw ConfigError("prompt tuning requires frozen transformer weights");
  auto trainable = tensors_of(encoder.parameters());
  return train_step(frozen_weights, &encoder, optimizer, trainable, batch,
                    lr_at(schedule, step), clip_norm);
}

template <typename T>
double mean_loss(const model::Transformer<T>& weights, const prompt::PromptEncoder<T>* encoder,
                 std::span<const prompt::TemplateTokens> items, std::size_t batch_size) {
  if (items.empty()) throw DataError("mean_loss over an empty set");
  ag::Tensor<T> virt;
  if (encoder) virt = encoder->virtual_embeddings().detach();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < items.size(); s += batch_size) {
    const auto chunk = items.subspan(s, std::min(batch_size, items.size() - s));
    const auto b = prompt::assemble_batch(encoder ? &virt : nullptr, weights, chunk);
    const auto loss = ag::cross_entropy(weights.forward(b.embeddings.detach(), b.batch).detach(),
                                        std::span<const std::int32_t>(b.targets),
                                        std::span<const std::uint8_t>(b.loss_mask));
    const auto n = static_cast<std::size_t>(std::count(b.loss_mask.begin(), b.loss_mask.end(), 1));
    total += static_cast<double>(loss.item()) * static_cast<double>(n);
    count += n;
  }
  return total / static_cast<double>(count);
}

template double train_step(const model::Transformer<float>&, const prompt::PromptEncoder<float>*,
                           Adam<float>&, std::vector<ag::Tensor<float>>&,
                           std::span<const prompt::TemplateTokens>, double, double);
template double train_step(const model::Transformer<double>&, const prompt::PromptEncoder<double>*,
                           Adam<double>&, std::vector<ag::Tensor<double>>&,
                           std::span<const prompt::TemplateTokens>, double, double);
template double prompt_tune_step(const model::Transformer<float>&, prompt::PromptEncoder<float>&,
                                 Adam<float>&, std::span<const prompt::TemplateTokens>,
                                 const ScheduleConfig&, std::int64_t, double);
template double prompt_tune_step(const model::Transformer<double>&, prompt::PromptEncoder<double>&,
                                 Adam<double>&, std::span<const prompt::TemplateTokens>,
                                 const ScheduleConfig&, std::int64_t, double);
template double mean_loss(const model::Transformer<float>&, const prompt::PromptEncoder<float>*,
                          std::span<const prompt::TemplateTokens>, std::size_t);
template double mean_loss(const model::Transformer<double>&, const prompt::PromptEncoder<double>*,
                          std::span<const prompt::TemplateTokens>, std::size_t);

std::vector<prompt::TemplateTokens> encode_examples(const bpe::Vocab& vocab,
                                                    std::span<const corpus::Example> examples) {
  std::vector<prompt::TemplateTokens> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    out.push_back(prompt::encode_template(vocab, e.dialogue, e.summary, prompt::Mode::kTrain));
  }
  return out;
}

TrainResult train(std::span<const corpus::Example> train_split,
                  std::span<const corpus::Example> validation_split, const bpe::Vocab& vocab,
                  const model::Transformer<float>& base, TrainMode mode,
                  const prompt::PromptEncoderConfig& encoder_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_split.empty()) throw DataError("empty training split");
  if (validation_split.empty()) throw DataError("empty validation split");
  const auto items = encode_examples(vocab, train_split);
  const auto val_items = encode_examples(vocab, validation_split);

  std::optional<prompt::PromptEncoder<float>> encoder;
  std::optional<model::Transformer<float>> tuned;
  std::vector<ag::Tensor<float>> trainable;
  if (mode == TrainMode::kPromptTune) {
    if (!base.frozen()) throw ConfigError("prompt tuning requires frozen transformer weights");
    if (encoder_config.model_dim != base.config().d_model) {
      throw ConfigError("prompt encoder model_dim " + std::to_string(encoder_config.model_dim) +
                        " does not match transformer d_model " +
                        std::to_string(base.config().d_model));
    }
    encoder = prompt::PromptEncoder<float>::init(encoder_config, derive_seed(config.seed, 1));
    trainable = tensors_of(encoder->parameters());
  } else {
    tuned = base.cast<float>();
    tuned->set_frozen(false);
    trainable = tensors_of(tuned->parameters());
  }
  const model::Transformer<float>& weights = tuned ? *tuned : base;
  const prompt::PromptEncoder<float>* enc = encoder ? &*encoder : nullptr;

  Adam<float> optimizer(trainable);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((items.size() + batch - 1) / batch);
  ScheduleConfig schedule;
  schedule.base_lr = config.base_lr;
  schedule.total_steps = steps_per_epoch * config.max_epochs;
  schedule.warmup_steps = std::min(config.warmup_steps, schedule.total_steps - 1);
  schedule.min_lr = config.min_lr;

  TrainResult result;
  result.trainable_parameters = model::count_parameters(
      enc ? enc->parameters() : weights.parameters(), true);
  CheckpointSelector selector(config.selection_metric == SelectionMetric::kValLoss);
  Rng rng(derive_seed(config.seed, 2));
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto t0 = Clock::now();
  std::int64_t step = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto te = Clock::now();
    shuffle(order, rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t s = 0; s < order.size(); s += batch) {
      std::vector<prompt::TemplateTokens> chunk;
      for (std::size_t k = s; k < std::min(order.size(), s + batch); ++k) chunk.push_back(items[order[k]]);
      lr = lr_at(schedule, step + 1);
      loss_sum += train_step(weights, enc, optimizer, trainable,
                             std::span<const prompt::TemplateTokens>(chunk), lr, config.clip_norm);
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    rec.lr = lr;
    rec.step = step;
    if (config.selection_metric == SelectionMetric::kValLoss) {
      rec.val_metric = mean_loss(weights, enc, std::span<const prompt::TemplateTokens>(val_items), batch);
    } else {
      ag::Tensor<float> virt;
      if (enc) virt = enc->virtual_embeddings().detach();
      std::vector<double> scores;
      for (const auto& e : validation_split) {
        const auto text = gen::generate(weights, enc ? &virt : nullptr, vocab, e.dialogue,
                                        config.generation);
        scores.push_back(metrics::rouge_l(text, e.summary).f1);
      }
      double sum = 0.0;
      for (double v : scores) sum += v;
      rec.val_metric = sum / static_cast<double>(scores.size());
    }
    if (selector.offer(epoch, rec.val_metric)) {
      result.best = enc ? prompt::to_container(*enc, config.seed, step)
                        : model::to_container(weights, config.seed, step);
      result.best_epoch = epoch;
      result.best_metric = rec.val_metric;
    }
    rec.seconds = seconds_since(te);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.steps = step;
  result.seconds = seconds_since(t0);
  return result;
}

TrainResult fine_tune_baseline(std::span<const corpus::Example> train_split,
                               std::span<const corpus::Example> validation_split,
                               const bpe::Vocab& vocab, const model::Transformer<float>& base,
                               const TrainConfig& config, const EpochCallback& on_epoch) {
  return train(train_split, validation_split, vocab, base, TrainMode::kFineTune, {}, config,
               on_epoch);
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"steps", steps},        {"batch_size", batch_size},     {"seq_len", seq_len},
          {"learning_rate", base_lr}, {"warmup_steps", warmup_steps}, {"min_lr", min_lr},
          {"clip_norm", clip_norm}, {"seed", seed}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.base_lr = j.value("learning_rate", c.base_lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.min_lr = j.value("min_lr", c.min_lr);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed pretraining config: ") + e.what());
  }
  return c;
}

PretrainResult pretrain_toy_lm(std::span<const std::string> texts, const bpe::Vocab& vocab,
                               const model::TransformerConfig& config,
                               const PretrainConfig& p,
                               const std::function<void(std::int64_t, double)>& on_step) {
  if (texts.empty()) throw DataError("pretraining corpus is empty");
  if (p.steps < 1 || p.batch_size < 1 || p.seq_len < 1) {
    throw ConfigError("pretraining steps, batch_size and seq_len must be positive");
  }
  if (p.seq_len > config.max_positions) throw ConfigError("seq_len exceeds max_positions");
  if (static_cast<std::size_t>(config.vocab_size) < vocab.size()) {
    throw ConfigError("model vocab_size is smaller than the tokenizer vocabulary");
  }
  std::vector<bpe::TokenId> stream;
  for (const auto& t : texts) {
    const auto ids = vocab.encode(t);
    stream.insert(stream.end(), ids.begin(), ids.end());
    stream.push_back(bpe::kEos);
  }
  const std::size_t window = static_cast<std::size_t>(p.seq_len) + 1;
  if (stream.size() < window) throw DataError("pretraining corpus is shorter than one window");

  PretrainResult out{model::Transformer<float>::init(config, derive_seed(p.seed, 1)), {}};
  auto& weights = out.weights;
  auto trainable = tensors_of(weights.parameters());
  Adam<float> optimizer(trainable);
  ScheduleConfig schedule{p.base_lr, std::min(p.warmup_steps, p.steps - 1), p.steps, p.min_lr};
  Rng rng(derive_seed(p.seed, 2));
  const std::size_t seq = static_cast<std::size_t>(p.seq_len);
  const std::size_t b = static_cast<std::size_t>(p.batch_size);
  std::vector<std::int32_t> inputs(b * seq), targets(b * seq);
  const std::vector<std::uint8_t> mask(b * seq, 1);
  for (std::int64_t step = 0; step < p.steps; ++step) {
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t start = rng.below(stream.size() - window + 1);
      for (std::size_t t = 0; t < seq; ++t) {
        inputs[i * seq + t] = stream[start + t];
        targets[i * seq + t] = stream[start + t + 1];
      }
    }
    optimizer.zero_grad();
    auto loss = ag::cross_entropy(
        weights.forward(weights.embed(std::span<const std::int32_t>(inputs)), b),
        std::span<const std::int32_t>(targets), std::span<const std::uint8_t>(mask));
    const double value = static_cast<double>(loss.item());
    ag::backward(loss);
    if (p.clip_norm > 0) clip_grad_norm(trainable, p.clip_norm);
    optimizer.step(lr_at(schedule, step + 1));
    out.losses.push_back(value);
    if (on_step) on_step(step, value);
  }
  weights.set_frozen(true);
  return out;
}

}  // namespace ptune::train
