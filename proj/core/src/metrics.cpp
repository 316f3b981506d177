// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/metrics.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "ptune/error.hpp"

namespace ptune::metrics {

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<Ngram, std::size_t> out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++out[Ngram(toks.begin() + static_cast<std::ptrdiff_t>(i),
                toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

Prf make_prf(double overlap, double cand, double ref) {
  Prf r;
  r.precision = cand > 0 ? overlap / cand : 0.0;
  r.recall = ref > 0 ? overlap / ref : 0.0;
  r.f1 = r.precision + r.recall > 0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Pairwise summation in a fixed order.
double stable_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return stable_sum(v.subspan(0, h)) + stable_sum(v.subspan(h));
}

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c >= 'A' && c <= 'Z') c = static_cast<unsigned char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
      cur += static_cast<char>(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string normalize(std::string_view text) {
  std::string out;
  for (const auto& t : normalize_tokens(text)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

Prf rouge_n(std::string_view candidate, std::string_view reference, int n) {
  if (n < 1) throw ConfigError("rouge_n needs n >= 1");
  const auto c = ngram_counts(normalize_tokens(candidate), static_cast<std::size_t>(n));
  const auto r = ngram_counts(normalize_tokens(reference), static_cast<std::size_t>(n));
  std::size_t overlap = 0, nc = 0, nr = 0;
  for (const auto& [g, k] : c) {
    nc += k;
    auto it = r.find(g);
    if (it != r.end()) overlap += std::min(k, it->second);
  }
  for (const auto& [g, k] : r) nr += k;
  return make_prf(static_cast<double>(overlap), static_cast<double>(nc), static_cast<double>(nr));
}

Prf rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = normalize_tokens(candidate);
  const auto r = normalize_tokens(reference);
  return make_prf(static_cast<double>(lcs_length(c, r)), static_cast<double>(c.size()),
                  static_cast<double>(r.size()));
}

double brevity_penalty(std::size_t c, std::size_t r) {
  if (c == 0) return 0.0;
  if (c >= r) return 1.0;
  return std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

double bleu(std::span<const std::string> candidates, std::span<const std::string> references) {
  if (candidates.size() != references.size()) {
    throw DataError("bleu: " + std::to_string(candidates.size()) + " candidates but " +
                    std::to_string(references.size()) + " references");
  }
  std::array<std::size_t, 4> matched{}, total{};
  std::size_t clen = 0, rlen = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = normalize_tokens(candidates[i]);
    const auto r = normalize_tokens(references[i]);
    clen += c.size();
    rlen += r.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cc = ngram_counts(c, n);
      const auto rc = ngram_counts(r, n);
      for (const auto& [g, k] : cc) {
        total[n - 1] += k;
        auto it = rc.find(g);
        if (it != rc.end()) matched[n - 1] += std::min(k, it->second);
      }
    }
  }
  // Orders longer than every candidate have no n-grams at all and are left
  // out of the mean, so short identical corpora still score 1.
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (total[n] == 0) continue;
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
    ++orders;
  }
  if (orders == 0) return 0.0;
  return brevity_penalty(clen, rlen) * std::exp(log_sum / orders);
}

double aggregate(double rouge1, double rouge2, double rougeL, double bleu_score,
                 std::optional<double> bertscore) {
  std::vector<double> v = {rouge1, rouge2, rougeL, bleu_score};
  if (bertscore) v.push_back(*bertscore);
  return stable_sum(v) / static_cast<double>(v.size());
}

std::string MetricReport::overall_basis() const {
  return bertscore ? "5-metric mean" : "4-metric mean";
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"Rouge-1", rouge1}, {"Rouge-2", rouge2}, {"Rouge-L", rougeL},
                      {"BLEU", bleu}};
  j["BERTScore"] = bertscore ? nlohmann::json(*bertscore) : nlohmann::json(nullptr);
  j["Overall"] = overall;
  j["overall_basis"] = overall_basis();
  j["n_examples"] = n_examples;
  return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.rouge1 = j.at("Rouge-1").get<double>();
    r.rouge2 = j.at("Rouge-2").get<double>();
    r.rougeL = j.at("Rouge-L").get<double>();
    r.bleu = j.at("BLEU").get<double>();
    if (j.contains("BERTScore") && !j.at("BERTScore").is_null()) {
      r.bertscore = j.at("BERTScore").get<double>();
    }
    r.overall = j.at("Overall").get<double>();
    r.n_examples = j.at("n_examples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

std::string format4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(10) << "Rouge-1" << std::setw(10) << "Rouge-2" << std::setw(10)
     << "Rouge-L" << std::setw(10) << "BLEU" << std::setw(11) << "BERTScore" << "Overall\n";
  os << std::setw(10) << format4(rouge1) << std::setw(10) << format4(rouge2) << std::setw(10)
     << format4(rougeL) << std::setw(10) << format4(bleu) << std::setw(11)
     << (bertscore ? format4(*bertscore) : std::string("-")) << format4(overall) << '\n';
  os << "examples: " << n_examples << ", overall is the " << overall_basis() << '\n';
  return os.str();
}

MetricReport evaluate(std::span<const Pair> pairs, const EvaluateOptions& options) {
  if (pairs.empty()) throw DataError("evaluate needs at least one prediction");
  std::vector<double> r1, r2, rl;
  std::vector<std::string> cands, refs;
  for (const auto& p : pairs) {
    r1.push_back(rouge_n(p.candidate, p.reference, 1).f1);
    r2.push_back(rouge_n(p.candidate, p.reference, 2).f1);
    rl.push_back(rouge_l(p.candidate, p.reference).f1);
    cands.push_back(p.candidate);
    refs.push_back(p.reference);
  }
  MetricReport rep;
  const double n = static_cast<double>(pairs.size());
  rep.rouge1 = stable_sum(r1) / n;
  rep.rouge2 = stable_sum(r2) / n;
  rep.rougeL = stable_sum(rl) / n;
  rep.bleu = bleu(cands, refs);
  if (!options.scorer_command.empty()) {
    rep.bertscore = run_external_scorer(options.scorer_command, pairs);
  }
  rep.overall = aggregate(rep.rouge1, rep.rouge2, rep.rougeL, rep.bleu, rep.bertscore);
  rep.n_examples = pairs.size();
  return rep;
}

double run_external_scorer(const std::string& command, std::span<const Pair> pairs) {
  static std::atomic<int> counter{0};
  auto input = std::filesystem::temp_directory_path() /
               ("ptune-scorer-" + std::to_string(::getpid()) + "-" +
                std::to_string(counter.fetch_add(1)) + ".jsonl");
  {
    std::ofstream out(input, std::ios::binary);
    if (!out) throw Error("cannot write scorer input " + input.string());
    for (const auto& p : pairs) {
      out << nlohmann::json{{"candidate", p.candidate}, {"reference", p.reference}}.dump() << '\n';
    }
  }
  const std::string full = "(" + command + ") < '" + input.string() + "'";
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) {
    std::filesystem::remove(input);
    throw Error("cannot start scorer: " + command);
  }
  std::string output;
  std::array<char, 4096> buf;
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), got);
  const int status = ::pclose(pipe);
  std::filesystem::remove(input);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error("scorer exited with a nonzero status");
  }
  double score = 0.0;
  try {
    const auto j = nlohmann::json::parse(output);
    score = j.at("bertscore").get<double>();
  } catch (const nlohmann::json::exception&) {
    throw DataError("malformed scorer output");
  }
  if (!(score >= 0.0 && score <= 1.0)) {
    throw DataError("scorer returned bertscore " + std::to_string(score) + " outside [0, 1]");
  }
  return score;
}

}  // namespace ptune::metrics
