// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ptune/cli.hpp"
#include "ptune/corpus.hpp"
#include "ptune/error.hpp"
#include "ptune/model.hpp"
#include "ptune/tokenizer.hpp"
#include "test_util.hpp"

namespace ptune {
namespace {

namespace fs = std::filesystem;

const std::string kData = PTUNE_TEST_DATA_DIR;

struct Run {
  int code;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

void put(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

TEST(Cli, StatsOnFixture) {
  const auto r = cli({"stats", "--train", kData + "/fixture.csv", "--format", "json"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j[0]["Datasets"], "Training");
  EXPECT_EQ(j[0]["Sample Number"], 3);
}

TEST(Cli, UsageAndRuntimeErrors) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"stats"}).code, kExitUsage);
  EXPECT_EQ(cli({"stats", "--train", kData + "/missing.csv"}).code, kExitRuntime);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, EvaluateIdentity) {
  const auto dir = testing::temp_dir("cli_eval");
  const auto rows = corpus::load_split(kData + "/fixture.csv");
  std::ostringstream pred;
  for (const auto& e : rows) pred << nlohmann::json{{"id", e.id}, {"candidate", e.summary}}.dump() << '\n';
  put(dir / "pred.jsonl", pred.str());
  const auto r = cli({"evaluate", "--pred", (dir / "pred.jsonl").string(), "--test",
                      kData + "/fixture.csv", "--out", (dir / "report.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  for (const char* k : {"Rouge-1", "Rouge-2", "Rouge-L", "BLEU", "Overall"}) EXPECT_EQ(j[k], 1.0) << k;
}

TEST(Cli, SweepFromConfig) {
  const auto dir = testing::temp_dir("cli_sweep");
  std::vector<corpus::Example> rows;
  const char* headers[] = {"GENHX", "ALLERGY", "FAM"};
  for (int i = 0; i < 9; ++i) {
    rows.push_back({std::to_string(i), headers[i % 3], "Patient: cough " + std::to_string(i), "cough"});
  }
  corpus::write_csv(dir / "train.csv", rows);
  corpus::write_csv(dir / "val.csv", std::vector<corpus::Example>(rows.begin(), rows.begin() + 2));
  corpus::write_csv(dir / "test.csv", std::vector<corpus::Example>(rows.begin() + 2, rows.begin() + 4));
  bpe::Vocab().save(dir / "vocab.json");
  auto base = model::Transformer<float>::init(model::TransformerConfig{1, 2, 16, 32, 259, 96}, 1);
  model::save_transformer(dir / "base.bin", base, 1, 0);

  nlohmann::json cfg = {{"train", (dir / "train.csv").string()},
                        {"validation", (dir / "val.csv").string()},
                        {"test", (dir / "test.csv").string()},
                        {"vocab", (dir / "vocab.json").string()},
                        {"base", (dir / "base.bin").string()},
                        {"out", (dir / "runs").string()},
                        {"virtual_tokens", {2, 4}},
                        {"encoders", {"mlp"}},
                        {"lrs", {0.01}},
                        {"lstm_hidden", 8},
                        {"mlp_hidden", 8},
                        {"epochs", 1},
                        {"max_new_tokens", 4}};
  put(dir / "cfg.json", cfg.dump());
  const auto r = cli({"sweep", "--config", (dir / "cfg.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::istringstream csv(slurp(dir / "runs" / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line.rfind("Model,Virtual Token,Rouge-1", 0), 0u);
  int data_rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    ASSERT_GE(cells.size(), 8u);
    const double mean = (std::stod(cells[2]) + std::stod(cells[3]) + std::stod(cells[4]) +
                         std::stod(cells[5])) / 4;
    EXPECT_NEAR(std::stod(cells[7]), mean, 5e-5);
    ++data_rows;
  }
  EXPECT_EQ(data_rows, 2);
  EXPECT_TRUE(fs::exists(dir / "runs" / "sweep.json"));

  cfg["bogus_key"] = 1;
  put(dir / "bad.json", cfg.dump());
  EXPECT_EQ(cli({"sweep", "--config", (dir / "bad.json").string()}).code, kExitUsage);
}

}  // namespace
}  // namespace ptune
