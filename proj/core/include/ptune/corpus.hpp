// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ptune::corpus {

// One dialogue / note-section pair.
struct Example {
  std::string id;
  std::string section_header;
  std::string dialogue;
  std::string summary;

  bool operator==(const Example&) const = default;
};

struct SplitSet {
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;
};

struct CorpusStats {
  std::size_t sample_count = 0;
  double avg_dialogue_words = 0.0;
  double avg_summary_words = 0.0;

  bool operator==(const CorpusStats&) const = default;
};

// Column names in the source files. Defaults follow the MTS-DIALOG release.
struct ColumnMap {
  std::string id = "ID";
  std::string section_header = "section_header";
  std::string summary = "section_text";
  std::string dialogue = "dialogue";
};

// RFC-4180 parsing: quoted fields may contain commas, CR/LF and doubled
// quotes. Returns rows of fields; a trailing newline does not add a row.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);
std::string csv_escape(std::string_view field);

// Loads one split from CSV, or from JSON-lines when the extension is
// .jsonl/.json. Fully empty rows are skipped; everything else must carry a
// unique id, a non-empty dialogue and a non-empty summary.
std::vector<Example> load_split(const std::filesystem::path& path, const ColumnMap& columns = {});

SplitSet load_dataset(const std::filesystem::path& train, const std::filesystem::path& validation,
                      const std::filesystem::path& test, const ColumnMap& columns = {});

// Writes examples as CSV with the given column names.
void write_csv(const std::filesystem::path& path, std::span<const Example> examples,
               const ColumnMap& columns = {});

// Number of maximal runs of non-whitespace, where whitespace is any Unicode
// White_Space code point (UTF-8 decoded; invalid bytes count as non-space).
std::size_t count_words(std::string_view text);

CorpusStats corpus_stats(std::span<const Example> examples);

// Few-shot subset: headers are visited round-robin in order of descending
// frequency (ties lexicographic); each visit draws the next example of that
// header from a seeded shuffle, skipping exhausted headers. Results for
// increasing n under one seed are prefixes of each other.
std::vector<Example> stratified_sample(std::span<const Example> examples, std::size_t n,
                                       std::uint64_t seed);

// Table-1-shaped dataset statistics.
struct StatsRow {
  std::string split;
  CorpusStats stats;
};
std::vector<StatsRow> dataset_stats(const SplitSet& splits);
nlohmann::json stats_to_json(std::span<const StatsRow> rows);
std::string stats_to_text(std::span<const StatsRow> rows);

}  // namespace ptune::corpus
