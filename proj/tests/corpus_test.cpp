// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "ptune/corpus.hpp"
#include "ptune/error.hpp"
#include "ptune/synthetic.hpp"
#include "test_util.hpp"

namespace ptune::corpus {
namespace {

const std::filesystem::path kData = PTUNE_TEST_DATA_DIR;

Example make(std::string id, std::string header, std::string dialogue = "d",
             std::string summary = "s") {
  return {std::move(id), std::move(header), std::move(dialogue), std::move(summary)};
}

TEST(LoadSplit, FixtureFieldsMatchCells) {
  const auto ex = load_split(kData / "fixture.csv");
  ASSERT_EQ(ex.size(), 3u);
  EXPECT_EQ(ex[0].id, "1");
  EXPECT_EQ(ex[0].section_header, "GENHX");
  EXPECT_EQ(ex[0].summary, "The patient is a 45 year old, here for a cough.");
  EXPECT_EQ(ex[0].dialogue, "Doctor: What brings you in?\nPatient: A cough, for two weeks.");
  EXPECT_EQ(ex[1].dialogue, "Doctor: Any allergies? Patient: None that I know of, \"none\" at all.");
  EXPECT_EQ(ex[2].section_header, "FAM/SOCHX");
  EXPECT_EQ(ex[2].summary, "Mother had diabetes.");
}

TEST(LoadSplit, EmptySplitIsAnError) {
  try {
    load_split(kData / "empty.csv");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("empty split"), std::string::npos);
  }
}

TEST(LoadSplit, MissingColumnAndDuplicateId) {
  const auto dir = testing::temp_dir("corpus_bad");
  {
    std::ofstream(dir / "nocol.csv") << "ID,dialogue\n1,hi\n";
    std::ofstream(dir / "dup.csv") << "ID,section_header,section_text,dialogue\n1,A,s,d\n1,B,t,e\n";
    std::ofstream(dir / "blank.csv") << "ID,section_header,section_text,dialogue\n1,A,,d\n";
  }
  EXPECT_THROW(load_split(dir / "nocol.csv"), DataError);
  EXPECT_THROW(load_split(dir / "dup.csv"), DataError);
  EXPECT_THROW(load_split(dir / "blank.csv"), DataError);
  EXPECT_THROW(load_split(dir / "missing.csv"), DataError);
}

TEST(LoadSplit, CustomColumnsAndJsonLines) {
  const auto dir = testing::temp_dir("corpus_cols");
  {
    std::ofstream(dir / "a.csv") << "key,label,note,conv\nx,H,sum,dia\n";
    std::ofstream(dir / "b.jsonl")
        << R"({"ID": "7", "section_header": "H", "section_text": "s", "dialogue": "d"})" << "\n\n";
  }
  ColumnMap cols{"key", "label", "note", "conv"};
  const auto a = load_split(dir / "a.csv", cols);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0], make("x", "H", "dia", "sum"));
  const auto b = load_split(dir / "b.jsonl");
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0], make("7", "H", "d", "s"));
}

TEST(Csv, RoundTripThroughWriter) {
  const auto dir = testing::temp_dir("corpus_rt");
  std::vector<Example> ex = {make("a", "H1", "line one\nline \"two\", three", "x, y"),
                             make("b", "H2", "plain", "text")};
  write_csv(dir / "out.csv", ex);
  EXPECT_EQ(load_split(dir / "out.csv"), ex);
}

TEST(Csv, UnterminatedQuoteThrows) { EXPECT_THROW(parse_csv("a,\"b\n"), DataError); }

TEST(LoadDataset, IdsMustBeDisjointAcrossSplits) {
  const auto dir = testing::temp_dir("corpus_ds");
  std::vector<Example> a = {make("1", "H")}, b = {make("1", "H")}, c = {make("3", "H")};
  write_csv(dir / "a.csv", a);
  write_csv(dir / "b.csv", b);
  write_csv(dir / "c.csv", c);
  EXPECT_THROW(load_dataset(dir / "a.csv", dir / "b.csv", dir / "c.csv"), DataError);
}

TEST(CountWords, UnicodeWhitespace) {
  EXPECT_EQ(count_words("a b c"), 3u);
  EXPECT_EQ(count_words("  leading\tand\ntrailing  "), 3u);
  EXPECT_EQ(count_words(""), 0u);
  EXPECT_EQ(count_words("caf\xC3\xA9\xC2\xA0na\xC3\xAFve"), 2u);  // NBSP separates
  EXPECT_EQ(count_words("x\xE3\x80\x80y"), 2u);                   // ideographic space
}

TEST(CorpusStats, HandCounts) {
  std::vector<Example> one = {make("1", "H", "a b c", "s")};
  EXPECT_DOUBLE_EQ(corpus_stats(one).avg_dialogue_words, 3.0);
  std::vector<Example> two = {make("1", "H", "a b", "x"), make("2", "H", "a b c d", "x y z")};
  const auto s = corpus_stats(two);
  EXPECT_EQ(s.sample_count, 2u);
  EXPECT_DOUBLE_EQ(s.avg_dialogue_words, 3.0);
  EXPECT_DOUBLE_EQ(s.avg_summary_words, 2.0);
  EXPECT_THROW(corpus_stats(std::vector<Example>{}), DataError);
}

TEST(DatasetStats, TableShape) {
  SplitSet s;
  s.train = load_split(kData / "fixture.csv");
  const auto rows = dataset_stats(s);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].split, "Training");
  const auto j = stats_to_json(rows);
  ASSERT_EQ(j.size(), 1u);
  for (const char* key : {"Datasets", "Sample Number", "Dialogue Average Word Count",
                          "Summary Average Word Count"}) {
    EXPECT_TRUE(j[0].contains(key)) << key;
  }
  EXPECT_EQ(j[0]["Sample Number"], 3);
  const auto text = stats_to_text(rows);
  EXPECT_NE(text.find("Dialogue Average Word Count"), std::string::npos);
}

std::vector<Example> twenty_headers() {
  // Header h has 21 - h examples, so frequencies are all distinct.
  std::vector<Example> ex;
  for (int h = 1; h <= 20; ++h) {
    for (int k = 0; k < 21 - h; ++k) {
      ex.push_back(make("h" + std::to_string(h) + "_" + std::to_string(k), "H" + std::to_string(h)));
    }
  }
  return ex;
}

TEST(StratifiedSample, OnePerHeaderAtTwenty) {
  const auto ex = twenty_headers();
  const auto s = stratified_sample(ex, 20, 3);
  std::set<std::string> headers;
  for (const auto& e : s) headers.insert(e.section_header);
  EXPECT_EQ(s.size(), 20u);
  EXPECT_EQ(headers.size(), 20u);
}

TEST(StratifiedSample, FiveMostFrequentHeaders) {
  const auto s = stratified_sample(twenty_headers(), 5, 11);
  std::set<std::string> headers;
  for (const auto& e : s) headers.insert(e.section_header);
  EXPECT_EQ(headers, (std::set<std::string>{"H1", "H2", "H3", "H4", "H5"}));
}

TEST(StratifiedSample, ExhaustiveDrawIsThePopulation) {
  const auto ex = twenty_headers();
  auto s = stratified_sample(ex, ex.size(), 2);
  auto key = [](const Example& a, const Example& b) { return a.id < b.id; };
  auto sorted = ex;
  std::sort(s.begin(), s.end(), key);
  std::sort(sorted.begin(), sorted.end(), key);
  EXPECT_EQ(s, sorted);
}

TEST(StratifiedSample, NestedAcrossSizesAndSeeded) {
  const auto ex = synthetic::generate(300, 5);
  for (std::uint64_t seed : {0u, 1u, 2u, 3u, 4u}) {
    std::vector<Example> prev;
    for (std::size_t n : {5u, 10u, 20u, 40u, 60u, 100u, 200u}) {
      const auto s = stratified_sample(ex, n, seed);
      ASSERT_EQ(s.size(), n);
      ASSERT_TRUE(std::equal(prev.begin(), prev.end(), s.begin()));
      std::set<std::string> ids;
      for (const auto& e : s) ids.insert(e.id);
      EXPECT_EQ(ids.size(), n);
      prev = s;
    }
    EXPECT_EQ(stratified_sample(ex, 40, seed), stratified_sample(ex, 40, seed));
  }
  EXPECT_NE(stratified_sample(ex, 40, 0), stratified_sample(ex, 40, 1));
}

TEST(StratifiedSample, HeaderCountsDifferByAtMostOneAmongUnexhausted) {
  const auto ex = synthetic::generate(400, 8);
  const auto s = stratified_sample(ex, 60, 9);
  std::map<std::string, int> population, drawn;
  for (const auto& e : ex) ++population[e.section_header];
  for (const auto& e : s) ++drawn[e.section_header];
  int lo = 1 << 30, hi = 0;
  for (const auto& [h, n] : population) {
    const int d = drawn[h];
    if (d < n) lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  EXPECT_LE(hi - lo, 1);
}

TEST(StratifiedSample, OutOfRangeThrows) {
  const auto ex = twenty_headers();
  EXPECT_THROW(stratified_sample(ex, 0, 0), DataError);
  EXPECT_THROW(stratified_sample(ex, ex.size() + 1, 0), DataError);
}

TEST(Synthetic, DeterministicWithTwentyHeaders) {
  const auto a = synthetic::generate(400, 42);
  EXPECT_EQ(a, synthetic::generate(400, 42));
  std::set<std::string> headers;
  for (const auto& e : a) headers.insert(e.section_header);
  EXPECT_EQ(headers.size(), 20u);
  EXPECT_EQ(synthetic::section_headers().size(), 20u);
  const auto splits = synthetic::generate_splits(10, 3, 4, 1);
  EXPECT_EQ(splits.train.size(), 10u);
  EXPECT_EQ(splits.validation.size(), 3u);
  EXPECT_EQ(splits.test.size(), 4u);
}

}  // namespace
}  // namespace ptune::corpus
