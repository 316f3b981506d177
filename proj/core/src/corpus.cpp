// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_set>

#include "ptune/error.hpp"
#include "ptune/rng.hpp"

namespace ptune::corpus {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_jsonl(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  return ext == ".jsonl" || ext == ".json" || ext == ".ndjson";
}

// Decodes one UTF-8 code point; malformed input yields the raw byte.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto c0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto c = static_cast<unsigned char>(s[i + k]);
    return (c & 0xC0) == 0x80 ? (c & 0x3F) : -1;
  };
  if (c0 < 0x80) {
    ++i;
    return c0;
  }
  int len = (c0 & 0xE0) == 0xC0 ? 2 : (c0 & 0xF0) == 0xE0 ? 3 : (c0 & 0xF8) == 0xF0 ? 4 : 0;
  if (len == 0) {
    ++i;
    return c0;
  }
  char32_t cp = c0 & (0x7F >> len);
  for (int k = 1; k < len; ++k) {
    const int v = cont(k);
    if (v < 0) {
      ++i;
      return c0;
    }
    cp = (cp << 6) | static_cast<char32_t>(v);
  }
  i += len;
  return cp;
}

bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

std::vector<Example> rows_to_examples(const std::vector<std::vector<std::string>>& rows,
                                      const ColumnMap& cm, const std::string& source) {
  if (rows.empty()) throw DataError(source + ": missing header row");
  const auto& header = rows[0];
  auto col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(source + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t ci = col(cm.id), ch = col(cm.section_header), cs = col(cm.summary),
                    cd = col(cm.dialogue);
  std::vector<Example> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (std::all_of(row.begin(), row.end(), [](const std::string& f) { return f.empty(); })) {
      continue;
    }
    auto field = [&](std::size_t c) { return c < row.size() ? row[c] : std::string(); };
    out.push_back({field(ci), field(ch), field(cd), field(cs)});
  }
  return out;
}

void validate_split(const std::vector<Example>& examples, const std::string& source) {
  if (examples.empty()) throw DataError(source + ": empty split");
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    const std::string where = source + " row " + std::to_string(i + 1);
    if (e.id.empty()) throw DataError(where + ": empty id");
    if (!ids.insert(e.id).second) throw DataError(where + ": duplicate id '" + e.id + "'");
    if (e.dialogue.empty()) throw DataError(where + ": empty dialogue");
    if (e.summary.empty()) throw DataError(where + ": empty summary");
  }
}

std::string json_field(const nlohmann::json& j, const std::string& key, const std::string& source) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(source + ": missing column '" + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_null()) return {};
  return it->dump();
}

}  // namespace

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  // Skip a UTF-8 byte-order mark.
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw DataError("unterminated quoted CSV field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<Example> load_split(const std::filesystem::path& path, const ColumnMap& columns) {
  const std::string source = path.string();
  const std::string text = read_file(path);
  std::vector<Example> examples;
  if (is_jsonl(path)) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw DataError(source + " line " + std::to_string(lineno) + ": " + e.what());
      }
      Example e{json_field(j, columns.id, source), json_field(j, columns.section_header, source),
                json_field(j, columns.dialogue, source), json_field(j, columns.summary, source)};
      if (e.id.empty() && e.section_header.empty() && e.dialogue.empty() && e.summary.empty()) {
        continue;
      }
      examples.push_back(std::move(e));
    }
  } else {
    examples = rows_to_examples(parse_csv(text), columns, source);
  }
  validate_split(examples, source);
  return examples;
}

SplitSet load_dataset(const std::filesystem::path& train, const std::filesystem::path& validation,
                      const std::filesystem::path& test, const ColumnMap& columns) {
  SplitSet s{load_split(train, columns), load_split(validation, columns), load_split(test, columns)};
  std::unordered_set<std::string> seen;
  for (const auto* split : {&s.train, &s.validation, &s.test}) {
    std::unordered_set<std::string> local;
    for (const auto& e : *split) local.insert(e.id);
    for (const auto& id : local) {
      if (!seen.insert(id).second) throw DataError("id '" + id + "' appears in two splits");
    }
  }
  return s;
}

void write_csv(const std::filesystem::path& path, std::span<const Example> examples,
               const ColumnMap& columns) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << csv_escape(columns.id) << ',' << csv_escape(columns.section_header) << ','
      << csv_escape(columns.summary) << ',' << csv_escape(columns.dialogue) << "\r\n";
  for (const auto& e : examples) {
    out << csv_escape(e.id) << ',' << csv_escape(e.section_header) << ',' << csv_escape(e.summary)
        << ',' << csv_escape(e.dialogue) << "\r\n";
  }
}

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < text.size();) {
    const bool space = is_unicode_space(next_code_point(text, i));
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

CorpusStats corpus_stats(std::span<const Example> examples) {
  if (examples.empty()) throw DataError("corpus_stats of an empty example list");
  std::size_t dw = 0, sw = 0;
  for (const auto& e : examples) {
    dw += count_words(e.dialogue);
    sw += count_words(e.summary);
  }
  const double n = static_cast<double>(examples.size());
  return {examples.size(), static_cast<double>(dw) / n, static_cast<double>(sw) / n};
}

std::vector<Example> stratified_sample(std::span<const Example> examples, std::size_t n,
                                       std::uint64_t seed) {
  if (n < 1 || n > examples.size()) {
    throw DataError("sample size " + std::to_string(n) + " outside [1, " +
                    std::to_string(examples.size()) + "]");
  }
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < examples.size(); ++i) groups[examples[i].section_header].push_back(i);

  std::vector<std::pair<std::string, std::vector<std::size_t>>> order(groups.begin(), groups.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second.size() > b.second.size();  // map order already lexicographic
  });

  Rng rng(seed);
  for (auto& [header, idx] : order) {
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[rng.below(i)]);
    }
  }

  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t round = 0; out.size() < n; ++round) {
    for (const auto& [header, idx] : order) {
      if (round < idx.size()) {
        out.push_back(examples[idx[round]]);
        if (out.size() == n) break;
      }
    }
  }
  return out;
}

std::vector<StatsRow> dataset_stats(const SplitSet& splits) {
  std::vector<StatsRow> rows;
  if (!splits.train.empty()) rows.push_back({"Training", corpus_stats(splits.train)});
  if (!splits.validation.empty()) rows.push_back({"Validation", corpus_stats(splits.validation)});
  if (!splits.test.empty()) rows.push_back({"Test", corpus_stats(splits.test)});
  return rows;
}

nlohmann::json stats_to_json(std::span<const StatsRow> rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"Datasets", r.split},
                   {"Sample Number", r.stats.sample_count},
                   {"Dialogue Average Word Count", r.stats.avg_dialogue_words},
                   {"Summary Average Word Count", r.stats.avg_summary_words}});
  }
  return arr;
}

std::string stats_to_text(std::span<const StatsRow> rows) {
  std::ostringstream os;
  os << std::left << std::setw(12) << "Datasets" << std::right << std::setw(15) << "Sample Number"
     << std::setw(30) << "Dialogue Average Word Count" << std::setw(29)
     << "Summary Average Word Count" << '\n';
  os << std::fixed << std::setprecision(2);
  for (const auto& r : rows) {
    os << std::left << std::setw(12) << r.split << std::right << std::setw(15)
       << r.stats.sample_count << std::setw(30) << r.stats.avg_dialogue_words << std::setw(29)
       << r.stats.avg_summary_words << '\n';
  }
  return os.str();
}

}  // namespace ptune::corpus
