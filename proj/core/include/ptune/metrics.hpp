// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ptune::metrics {

// Lowercase, every character outside [a-z0-9] becomes a separator, split on
// whitespace.
std::vector<std::string> normalize_tokens(std::string_view text);
std::string normalize(std::string_view text);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf rouge_n(std::string_view candidate, std::string_view reference, int n);
Prf rouge_l(std::string_view candidate, std::string_view reference);

double brevity_penalty(std::size_t candidate_length, std::size_t reference_length);

// Corpus BLEU-4 with pooled clipped precisions and no smoothing. Orders with
// no candidate n-grams at all are dropped from the geometric mean.
double bleu(std::span<const std::string> candidates, std::span<const std::string> references);

// Mean of the present values.
double aggregate(double rouge1, double rouge2, double rougeL, double bleu,
                 std::optional<double> bertscore = std::nullopt);

struct Pair {
  std::string candidate;
  std::string reference;
};

struct MetricReport {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double bleu = 0.0;
  std::optional<double> bertscore;
  double overall = 0.0;
  std::size_t n_examples = 0;

  // "5-metric mean" when bertscore is present, else "4-metric mean".
  std::string overall_basis() const;
  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
  std::string to_text() const;
};

struct EvaluateOptions {
  // Shell command for the external BERTScore scorer; empty disables it.
  std::string scorer_command;
};

MetricReport evaluate(std::span<const Pair> pairs, const EvaluateOptions& options = {});

// Runs the command with JSON-lines {candidate, reference} on standard input
// and parses one {"bertscore": x} object from standard output.
double run_external_scorer(const std::string& command, std::span<const Pair> pairs);

// Fixed-width 4-decimal rendering used by all report tables.
std::string format4(double v);

}  // namespace ptune::metrics
