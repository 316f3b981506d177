// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptune/corpus.hpp"
#include "ptune/generation.hpp"
#include "ptune/metrics.hpp"
#include "ptune/model.hpp"
#include "ptune/prompt.hpp"
#include "ptune/tokenizer.hpp"
#include "ptune/training.hpp"

namespace ptune::harness {

struct TrialSpec {
  std::string model = "toy-M";
  prompt::EncoderType encoder_type = prompt::EncoderType::kLstm;
  int num_virtual_tokens = 16;
  int lstm_layers = 2;
  int lstm_hidden = 64;
  int mlp_hidden = 0;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  train::TrainMode mode = train::TrainMode::kPromptTune;
  std::size_t sample_count = 0;  // 0 trains on the full split
  int max_epochs = 20;
  int batch_size = 4;
  std::int64_t warmup_steps = 50;
  train::SelectionMetric selection_metric = train::SelectionMetric::kValLoss;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static TrialSpec from_json(const nlohmann::json& j);
  // SHA-256 of the canonical JSON, first 16 hex digits.
  std::string hash() const;

  prompt::PromptEncoderConfig encoder_config(int model_dim) const;
  train::TrainConfig train_config(const gen::GenerationConfig& generation) const;
  bool operator==(const TrialSpec&) const = default;
};

// Closed-form trainable parameter count of a trial.
std::size_t closed_form_trainable(const TrialSpec& spec, const model::TransformerConfig& base);

struct TrialRecord {
  TrialSpec spec;
  std::string trial_hash;
  bool ok = true;
  std::string error;
  std::size_t trainable_parameters = 0;
  double training_duration_seconds = 0.0;  // stored in timing.jsonl, not record.json
  metrics::MetricReport report;
  int best_epoch = 0;
  std::int64_t steps_executed = 0;  // 0 when loaded from a completed trial

  nlohmann::json to_json() const;
  static TrialRecord from_json(const nlohmann::json& j);
};

// Shared inputs of every trial in a run.
struct Environment {
  corpus::SplitSet splits;
  bpe::Vocab vocab;
  std::string model_name = "toy-M";
  model::Transformer<float> base{model::TransformerConfig{}};  // frozen
  std::filesystem::path out_dir = "runs";
  gen::GenerationConfig generation;
  std::string scorer_command;
};

// Runs one trial in out_dir/<hash>, or loads its record when the directory
// already holds a completed one. Writes spec.json, history.jsonl,
// timing.jsonl, checkpoint.bin, predictions.jsonl, report.json and finally
// record.json. Failures are returned as records with ok = false.
TrialRecord run_trial(const Environment& env, const TrialSpec& spec);

// argmax overall; ties go to fewer trainable parameters, then spec order.
// Failed rows never win. Returns nullopt when no row succeeded.
std::optional<std::size_t> select_best(std::span<const TrialRecord> records);

struct Grid {
  std::vector<int> num_virtual_tokens = {8, 16, 32};
  std::vector<prompt::EncoderType> encoder_types = {prompt::EncoderType::kMlp,
                                                   prompt::EncoderType::kLstm};
  std::vector<double> learning_rates = {1e-4};

  static Grid from_json(const nlohmann::json& j);
  // The virtual token ladder used at full scale.
  static std::vector<int> full_scale_token_ladder() { return {32, 64, 128, 256, 512}; }
};

// Cartesian product in (tokens, encoder, learning rate) order.
std::vector<TrialSpec> expand_grid(const TrialSpec& base, const Grid& grid);

struct SweepResult {
  std::vector<TrialRecord> records;
  std::optional<std::size_t> best;
};

SweepResult sweep(const Environment& env, std::span<const TrialSpec> grid);

std::vector<std::size_t> full_scale_fewshot_ladder();

// The subset used for a few-shot size; nested across sizes.
std::vector<corpus::Example> fewshot_subset(std::span<const corpus::Example> train, std::size_t n,
                                            std::uint64_t seed);

std::vector<TrialRecord> fewshot_curve(const Environment& env, std::span<const std::size_t> sizes,
                                       std::uint64_t seed, const TrialSpec& base_spec);

struct Comparison {
  TrialRecord prompt_arm;
  TrialRecord fine_tune_arm;
  std::size_t total_parameters = 0;  // of the shared base transformer
};

Comparison compare_modes(const Environment& env, TrialSpec prompt_spec, TrialSpec fine_tune_spec);

// ---- report tables ----------------------------------------------------------

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  nlohmann::json to_json() const;  // array of objects keyed by column
  std::string to_text() const;     // aligned columns
};

extern const std::vector<std::string> kSweepColumns;
extern const std::vector<std::string> kCompareColumns;
extern const std::vector<std::string> kFewshotColumns;

// Metric cells are printed to 4 decimals and Overall is the mean of the
// printed cells, so every row is self-consistent.
Table sweep_table(std::span<const TrialRecord> records);
Table compare_table(const Comparison& comparison);
Table fewshot_table(std::span<const TrialRecord> records, std::size_t full_size);

std::string format_duration(double seconds);

}  // namespace ptune::harness
