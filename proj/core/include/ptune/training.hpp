// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptune/checkpoint.hpp"
#include "ptune/corpus.hpp"
#include "ptune/generation.hpp"
#include "ptune/model.hpp"
#include "ptune/optim.hpp"
#include "ptune/prompt.hpp"
#include "ptune/tokenizer.hpp"

namespace ptune::train {

enum class TrainMode { kPromptTune, kFineTune };
enum class SelectionMetric { kValLoss, kRougeL };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(std::string_view s);
std::string to_string(SelectionMetric m);
SelectionMetric selection_metric_from_string(std::string_view s);

struct TrainConfig {
  int max_epochs = 20;
  int batch_size = 4;
  std::uint64_t seed = 0;
  SelectionMetric selection_metric = SelectionMetric::kValLoss;
  double base_lr = 1e-4;
  std::int64_t warmup_steps = 50;
  double min_lr = 0.0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  // Used only for Rouge-L selection.
  gen::GenerationConfig generation;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Keeps the best epoch; only strict improvements replace it, so ties keep
// the earlier epoch.
class CheckpointSelector {
 public:
  explicit CheckpointSelector(bool lower_is_better) : lower_(lower_is_better) {}
  bool offer(int epoch, double value);
  std::optional<double> best_value() const { return best_; }
  int best_epoch() const { return epoch_; }

 private:
  bool lower_;
  std::optional<double> best_;
  int epoch_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double lr = 0.0;
  std::int64_t step = 0;
  double seconds = 0.0;

  // Deterministic fields only; wall time is written separately.
  nlohmann::json to_json() const;
};

struct TrainResult {
  checkpoint::Container best;  // prompt encoder or full transformer
  int best_epoch = 0;
  double best_metric = 0.0;
  std::vector<EpochRecord> history;
  std::int64_t steps = 0;
  double seconds = 0.0;
  std::size_t trainable_parameters = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// One optimization step on a batch. encoder is null for a prompt-free
// (fine-tuning) step. Returns the batch loss before the update.
template <typename T>
double train_step(const model::Transformer<T>& weights, const prompt::PromptEncoder<T>* encoder,
                  Adam<T>& optimizer, std::vector<ag::Tensor<T>>& trainable,
                  std::span<const prompt::TemplateTokens> batch, double lr, double clip_norm);

// Prompt-tuning step: weights must be frozen; only encoder arrays change.
template <typename T>
double prompt_tune_step(const model::Transformer<T>& frozen_weights,
                        prompt::PromptEncoder<T>& encoder, Adam<T>& optimizer,
                        std::span<const prompt::TemplateTokens> batch,
                        const ScheduleConfig& schedule, std::int64_t step, double clip_norm = 1.0);

// Token-weighted mean masked loss over the items.
template <typename T>
double mean_loss(const model::Transformer<T>& weights, const prompt::PromptEncoder<T>* encoder,
                 std::span<const prompt::TemplateTokens> items, std::size_t batch_size);

std::vector<prompt::TemplateTokens> encode_examples(const bpe::Vocab& vocab,
                                                    std::span<const corpus::Example> examples);

// Prompt tuning needs a frozen base; fine tuning trains a private copy of
// the base with every array trainable. encoder_config is ignored when fine
// tuning.
TrainResult train(std::span<const corpus::Example> train_split,
                  std::span<const corpus::Example> validation_split, const bpe::Vocab& vocab,
                  const model::Transformer<float>& base, TrainMode mode,
                  const prompt::PromptEncoderConfig& encoder_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

TrainResult fine_tune_baseline(std::span<const corpus::Example> train_split,
                               std::span<const corpus::Example> validation_split,
                               const bpe::Vocab& vocab, const model::Transformer<float>& base,
                               const TrainConfig& config, const EpochCallback& on_epoch = {});

struct PretrainConfig {
  std::int64_t steps = 2000;
  int batch_size = 8;
  int seq_len = 128;
  double base_lr = 3e-3;
  std::int64_t warmup_steps = 100;
  double min_lr = 1e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

struct PretrainResult {
  model::Transformer<float> weights;
  std::vector<double> losses;  // one per step
};

// Next-token training on random windows of the EOS-joined corpus. The
// returned weights are frozen.
PretrainResult pretrain_toy_lm(std::span<const std::string> texts, const bpe::Vocab& vocab,
                               const model::TransformerConfig& config,
                               const PretrainConfig& pretrain,
                               const std::function<void(std::int64_t, double)>& on_step = {});

}  // namespace ptune::train
