// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "ptune/error.hpp"
#include "ptune/synthetic.hpp"
#include "ptune/tokenizer.hpp"
#include "test_util.hpp"

namespace ptune::bpe {
namespace {

std::vector<std::string> round_trip_fixtures() {
  std::vector<std::string> s = {
      "",
      " ",
      "a",
      "Doctor: How are you?",
      "Patient: I've had a cough for 3 days.",
      "tab\tand\nnewline\r\n",
      "caf\xC3\xA9 na\xC3\xAFve r\xC3\xA9sum\xC3\xA9",
      "\xE6\x97\xA5\xE6\x9C\xAC\xE8\xAA\x9E\xE3\x81\xA7\xE3\x81\x99",
      "emoji \xF0\x9F\x98\x80 and \xF0\x9F\xA9\xBA",
      "\xCE\xB1\xCE\xB2\xCE\xB3 \xD0\xB4\xD0\xB0",
      "   leading and trailing   ",
      "punctuation!!! ... ??? ,,,",
      "\xFF\xFE raw invalid bytes \x80",
      "Input: hi\n Output:ok",
  };
  const auto ex = synthetic::generate(86, 17);
  for (const auto& e : ex) s.push_back(e.dialogue.substr(0, 80 + s.size()));
  return s;
}

TEST(TrainBpe, MinimalVocabHasNoMerges) {
  std::vector<std::string> texts = {"hello world"};
  const auto v = train_bpe(texts, kMinVocabSize);
  EXPECT_EQ(v.size(), 259u);
  EXPECT_TRUE(v.merges().empty());
  EXPECT_EQ(v.encode("hi"), (std::vector<TokenId>{'h', 'i'}));
}

TEST(TrainBpe, SingleMergeOnRepeatedByte) {
  std::vector<std::string> texts = {"aaaa"};
  const auto v = train_bpe(texts, 260);
  ASSERT_EQ(v.merges().size(), 1u);
  EXPECT_EQ(v.merges()[0], (std::pair<TokenId, TokenId>{'a', 'a'}));
  EXPECT_EQ(v.token_bytes(259), "aa");
  // Leftmost-greedy application.
  EXPECT_EQ(v.encode("aaa"), (std::vector<TokenId>{259, 'a'}));
}

TEST(TrainBpe, IdenticalPairStatisticsGiveIdenticalMerges) {
  std::vector<std::string> a = {"low lower lowest", "newer wider"};
  std::vector<std::string> b = {"newer wider", "low lower lowest"};
  EXPECT_EQ(train_bpe(a, 300).merges(), train_bpe(b, 300).merges());
  EXPECT_EQ(train_bpe(a, 300, 1).merges(), train_bpe(a, 300, 2).merges());
}

TEST(TrainBpe, StopsWhenNoPairRepeats) {
  std::vector<std::string> texts = {"abcdef"};
  EXPECT_TRUE(train_bpe(texts, 400).merges().empty());
  EXPECT_THROW(train_bpe(texts, 100), ConfigError);
}

TEST(Encode, EmptyInput) {
  Vocab v;
  EXPECT_TRUE(v.encode("").empty());
}

TEST(Encode, RoundTripsFixtures) {
  const auto fixtures = round_trip_fixtures();
  ASSERT_GE(fixtures.size(), 100u);
  const auto v = train_bpe(synthetic::lm_corpus(200, 3), 512);
  EXPECT_GT(v.merges().size(), 100u);
  for (const auto& s : fixtures) {
    const auto ids = v.encode(s);
    EXPECT_EQ(v.decode(ids), s);
    for (TokenId id : ids) {
      EXPECT_GE(id, 0);
      EXPECT_LT(static_cast<std::size_t>(id), v.size());
      EXPECT_FALSE(v.is_special(id));
    }
  }
}

TEST(Encode, MergesCompress) {
  const auto v = train_bpe(synthetic::lm_corpus(200, 3), 512);
  const std::string s = "Doctor: How are you feeling today? Patient: Not great.";
  EXPECT_LT(v.encode(s).size(), s.size() / 2);
}

TEST(Pretokenize, ConcatenationIsIdentity) {
  for (const auto& s : round_trip_fixtures()) {
    std::string joined;
    for (auto c : pretokenize(s)) joined += c;
    EXPECT_EQ(joined, s);
  }
}

TEST(Vocab, SaveLoadRoundTrip) {
  const auto v = train_bpe(synthetic::lm_corpus(50, 1), 300);
  const auto dir = testing::temp_dir("vocab");
  v.save(dir / "v.json");
  const auto w = Vocab::load(dir / "v.json");
  EXPECT_EQ(w.merges(), v.merges());
  EXPECT_EQ(w.size(), v.size());
  EXPECT_EQ(w.to_json(), v.to_json());
}

TEST(Vocab, RejectsMalformedFiles) {
  nlohmann::json j = Vocab().to_json();
  j["format"] = "something-else";
  EXPECT_THROW(Vocab::from_json(j), DataError);
  nlohmann::json bad = Vocab().to_json();
  bad["merges"] = nlohmann::json::array({nlohmann::json::array({1, 9999})});
  EXPECT_THROW(Vocab::from_json(bad), DataError);
}

TEST(Decode, SpecialsAndUnknownIds) {
  Vocab v;
  EXPECT_EQ(v.bos(), kBos);
  EXPECT_EQ(v.eos(), kEos);
  EXPECT_EQ(v.pad(), kPad);
  std::vector<TokenId> bad = {9999};
  EXPECT_THROW(v.decode(bad), DataError);
}

}  // namespace
}  // namespace ptune::bpe
