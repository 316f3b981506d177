// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ptune/digest.hpp"
#include "ptune/error.hpp"
#include "ptune/rng.hpp"

namespace ptune::harness {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double round4(double v) { return std::round(v * 1e4) / 1e4; }

std::string lr_string(double lr) {
  std::ostringstream os;
  os << lr;
  return os.str();
}

}  // namespace

// ---- TrialSpec ----------------------------------------------------------------

nlohmann::json TrialSpec::to_json() const {
  return {{"model", model},
          {"encoder_type", prompt::to_string(encoder_type)},
          {"num_virtual_tokens", num_virtual_tokens},
          {"lstm_layers", lstm_layers},
          {"lstm_hidden", lstm_hidden},
          {"mlp_hidden", mlp_hidden},
          {"learning_rate", learning_rate},
          {"seed", seed},
          {"mode", train::to_string(mode)},
          {"sample_count", sample_count},
          {"max_epochs", max_epochs},
          {"batch_size", batch_size},
          {"warmup_steps", warmup_steps},
          {"selection_metric", train::to_string(selection_metric)}};
}

TrialSpec TrialSpec::from_json(const nlohmann::json& j) {
  TrialSpec s;
  try {
    s.model = j.value("model", s.model);
    s.encoder_type =
        prompt::encoder_type_from_string(j.value("encoder_type", prompt::to_string(s.encoder_type)));
    s.num_virtual_tokens = j.value("num_virtual_tokens", s.num_virtual_tokens);
    s.lstm_layers = j.value("lstm_layers", s.lstm_layers);
    s.lstm_hidden = j.value("lstm_hidden", s.lstm_hidden);
    s.mlp_hidden = j.value("mlp_hidden", s.mlp_hidden);
    s.learning_rate = j.value("learning_rate", s.learning_rate);
    s.seed = j.value("seed", s.seed);
    s.mode = train::train_mode_from_string(j.value("mode", train::to_string(s.mode)));
    s.sample_count = j.value("sample_count", s.sample_count);
    s.max_epochs = j.value("max_epochs", s.max_epochs);
    s.batch_size = j.value("batch_size", s.batch_size);
    s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
    s.selection_metric = train::selection_metric_from_string(
        j.value("selection_metric", train::to_string(s.selection_metric)));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed trial spec: ") + e.what());
  }
  return s;
}

std::string TrialSpec::hash() const { return sha256_hex(to_json().dump()).substr(0, 16); }

prompt::PromptEncoderConfig TrialSpec::encoder_config(int model_dim) const {
  prompt::PromptEncoderConfig c;
  c.num_virtual_tokens = num_virtual_tokens;
  c.encoder_type = encoder_type;
  c.lstm_layers = lstm_layers;
  c.lstm_hidden = lstm_hidden;
  c.mlp_hidden = mlp_hidden;
  c.model_dim = model_dim;
  return c;
}

train::TrainConfig TrialSpec::train_config(const gen::GenerationConfig& generation) const {
  train::TrainConfig c;
  c.max_epochs = max_epochs;
  c.batch_size = batch_size;
  c.seed = seed;
  c.selection_metric = selection_metric;
  c.base_lr = learning_rate;
  c.warmup_steps = warmup_steps;
  c.generation = generation;
  c.generation.seed = derive_seed(seed, 3);
  return c;
}

std::size_t closed_form_trainable(const TrialSpec& spec, const model::TransformerConfig& base) {
  if (spec.mode == train::TrainMode::kFineTune) return model::closed_form_parameter_count(base);
  return prompt::closed_form_parameter_count(spec.encoder_config(base.d_model));
}

// ---- TrialRecord --------------------------------------------------------------

nlohmann::json TrialRecord::to_json() const {
  return {{"spec", spec.to_json()},
          {"trial", trial_hash},
          {"ok", ok},
          {"error", error},
          {"trainable_parameters", trainable_parameters},
          {"report", report.to_json()},
          {"best_epoch", best_epoch},
          {"steps", steps_executed}};
}

TrialRecord TrialRecord::from_json(const nlohmann::json& j) {
  TrialRecord r;
  try {
    r.spec = TrialSpec::from_json(j.at("spec"));
    r.trial_hash = j.at("trial").get<std::string>();
    r.ok = j.at("ok").get<bool>();
    r.error = j.value("error", std::string());
    r.trainable_parameters = j.at("trainable_parameters").get<std::size_t>();
    r.report = metrics::MetricReport::from_json(j.at("report"));
    r.best_epoch = j.value("best_epoch", 0);
    r.steps_executed = j.value("steps", std::int64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed trial record: ") + e.what());
  }
  return r;
}

// ---- trials ---------------------------------------------------------------------

namespace {

// Wall time lives in timing.jsonl so record.json stays byte-reproducible.
double recorded_duration(const fs::path& timing) {
  std::ifstream in(timing);
  std::string line;
  double seconds = 0.0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_object() && j.contains("training_seconds")) seconds = j["training_seconds"].get<double>();
  }
  return seconds;
}

}  // namespace

TrialRecord run_trial(const Environment& env, const TrialSpec& spec) {
  TrialRecord rec;
  rec.spec = spec;
  rec.trial_hash = spec.hash();
  const fs::path dir = env.out_dir / rec.trial_hash;
  const fs::path record_path = dir / "record.json";
  if (fs::exists(record_path)) {
    try {
      auto done = TrialRecord::from_json(nlohmann::json::parse(read_text(record_path)));
      if (done.ok && done.spec == spec) {
        done.steps_executed = 0;
        done.training_duration_seconds = recorded_duration(dir / "timing.jsonl");
        return done;
      }
    } catch (const std::exception&) {
      // Unreadable record: rerun the trial.
    }
  }
  try {
    if (spec.model != env.model_name) {
      throw ConfigError("trial targets model '" + spec.model + "' but the base is '" +
                        env.model_name + "'");
    }
    if (env.splits.test.empty()) throw DataError("empty test split");
    fs::create_directories(dir);
    fs::remove(record_path);
    write_text(dir / "spec.json", spec.to_json().dump(2) + "\n");

    std::vector<corpus::Example> subset;
    std::span<const corpus::Example> train_split = env.splits.train;
    if (spec.sample_count > 0) {
      subset = fewshot_subset(env.splits.train, spec.sample_count, spec.seed);
      train_split = subset;
    }
    std::ofstream history(dir / "history.jsonl", std::ios::binary | std::ios::trunc);
    std::ofstream timing(dir / "timing.jsonl", std::ios::binary | std::ios::trunc);
    const auto tcfg = spec.train_config(env.generation);
    const auto result = train::train(
        train_split, env.splits.validation, env.vocab, env.base, spec.mode,
        spec.encoder_config(env.base.config().d_model), tcfg, [&](const train::EpochRecord& e) {
          history << e.to_json().dump() << '\n';
          timing << nlohmann::json{{"epoch", e.epoch}, {"seconds", e.seconds}}.dump() << '\n';
          history.flush();
        });
    timing << nlohmann::json{{"training_seconds", result.seconds}}.dump() << '\n';
    history.close();
    timing.close();
    write_text(dir / "checkpoint.bin", checkpoint::serialize(result.best));

    std::optional<prompt::PromptEncoder<float>> encoder;
    std::optional<model::Transformer<float>> tuned;
    ag::Tensor<float> virt;
    if (spec.mode == train::TrainMode::kPromptTune) {
      encoder = prompt::encoder_from_container(result.best);
      virt = encoder->virtual_embeddings().detach();
    } else {
      tuned = model::transformer_from_container(result.best);
      tuned->set_frozen(true);
    }
    const auto& weights = tuned ? *tuned : env.base;
    std::vector<metrics::Pair> pairs;
    std::ostringstream preds;
    for (const auto& e : env.splits.test) {
      auto text = gen::generate(weights, encoder ? &virt : nullptr, env.vocab, e.dialogue,
                                tcfg.generation);
      preds << nlohmann::json{{"id", e.id}, {"candidate", text}}.dump() << '\n';
      pairs.push_back({std::move(text), e.summary});
    }
    write_text(dir / "predictions.jsonl", preds.str());
    metrics::EvaluateOptions opts;
    opts.scorer_command = env.scorer_command;
    rec.report = metrics::evaluate(pairs, opts);
    rec.trainable_parameters = result.trainable_parameters;
    rec.training_duration_seconds = result.seconds;
    rec.best_epoch = result.best_epoch;
    rec.steps_executed = result.steps;

    auto report = rec.report.to_json();
    report["trial"] = rec.trial_hash;
    report["trainable_parameters"] = rec.trainable_parameters;
    report["best_epoch"] = rec.best_epoch;
    write_text(dir / "report.json", report.dump(2) + "\n");
    write_text(record_path, rec.to_json().dump(2) + "\n");
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

std::optional<std::size_t> select_best(std::span<const TrialRecord> records) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.ok) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = records[*best];
    if (r.report.overall > b.report.overall ||
        (r.report.overall == b.report.overall &&
         r.trainable_parameters < b.trainable_parameters)) {
      best = i;
    }
  }
  return best;
}

Grid Grid::from_json(const nlohmann::json& j) {
  Grid g;
  try {
    if (j.contains("num_virtual_tokens")) {
      g.num_virtual_tokens = j.at("num_virtual_tokens").get<std::vector<int>>();
    }
    if (j.contains("encoder_type")) {
      g.encoder_types.clear();
      for (const auto& s : j.at("encoder_type")) {
        g.encoder_types.push_back(prompt::encoder_type_from_string(s.get<std::string>()));
      }
    }
    if (j.contains("learning_rate")) {
      g.learning_rates = j.at("learning_rate").get<std::vector<double>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed grid: ") + e.what());
  }
  return g;
}

std::vector<TrialSpec> expand_grid(const TrialSpec& base, const Grid& grid) {
  std::vector<TrialSpec> out;
  for (int m : grid.num_virtual_tokens) {
    for (auto t : grid.encoder_types) {
      for (double lr : grid.learning_rates) {
        TrialSpec s = base;
        s.num_virtual_tokens = m;
        s.encoder_type = t;
        s.learning_rate = lr;
        out.push_back(s);
      }
    }
  }
  return out;
}

SweepResult sweep(const Environment& env, std::span<const TrialSpec> grid) {
  if (grid.empty()) throw ConfigError("empty sweep grid");
  SweepResult r;
  for (const auto& spec : grid) r.records.push_back(run_trial(env, spec));
  r.best = select_best(r.records);
  return r;
}

std::vector<std::size_t> full_scale_fewshot_ladder() { return {5, 10, 20, 40, 60, 100, 200, 0}; }

std::vector<corpus::Example> fewshot_subset(std::span<const corpus::Example> train, std::size_t n,
                                            std::uint64_t seed) {
  return corpus::stratified_sample(train, n, derive_seed(seed, 4));
}

std::vector<TrialRecord> fewshot_curve(const Environment& env, std::span<const std::size_t> sizes,
                                       std::uint64_t seed, const TrialSpec& base_spec) {
  if (sizes.empty()) throw ConfigError("few-shot curve needs at least one size");
  std::size_t prev = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::size_t s = sizes[i];
    if (s == 0) {
      if (i + 1 != sizes.size()) throw ConfigError("the full-split entry (0) must come last");
      continue;
    }
    if (s <= prev) throw ConfigError("few-shot sizes must be strictly ascending");
    if (s > env.splits.train.size()) {
      throw DataError("few-shot size " + std::to_string(s) + " exceeds the training split of " +
                      std::to_string(env.splits.train.size()));
    }
    prev = s;
  }
  std::vector<TrialRecord> out;
  for (std::size_t s : sizes) {
    TrialSpec spec = base_spec;
    spec.seed = seed;
    spec.sample_count = s;
    spec.mode = train::TrainMode::kPromptTune;
    out.push_back(run_trial(env, spec));
  }
  return out;
}

Comparison compare_modes(const Environment& env, TrialSpec prompt_spec, TrialSpec fine_tune_spec) {
  prompt_spec.mode = train::TrainMode::kPromptTune;
  fine_tune_spec.mode = train::TrainMode::kFineTune;
  return {run_trial(env, prompt_spec), run_trial(env, fine_tune_spec),
          env.base.count_parameters(false)};
}

// ---- tables -------------------------------------------------------------------

const std::vector<std::string> kSweepColumns = {
    "Model",   "Virtual Token", "Rouge-1",      "Rouge-2",       "Rouge-L",
    "BLEU",    "BERTScore",     "Overall",      "Encoder",       "Learning Rate",
    "Trainable Parameters",     "Best",         "Status",        "Trial"};

const std::vector<std::string> kCompareColumns = {
    "Model",   "Initiate Method", "Trainable Parameters", "Training Duration", "Rouge-1",
    "Rouge-2", "Rouge-L",         "BLEU",                 "BERT Score",        "Total Parameters"};

const std::vector<std::string> kFewshotColumns = {"Model",   "Sample",    "Rouge-1", "Rouge-2",
                                                  "Rouge-L", "BERTScore", "BLEU"};

std::string Table::to_csv() const {
  std::ostringstream os;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) os << ',';
    os << corpus::csv_escape(columns[c]);
  }
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << ',';
      os << corpus::csv_escape(row[c]);
    }
    os << '\n';
  }
  return os.str();
}

nlohmann::json Table::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string& cell = row[c];
      if (cell.empty()) {
        obj[columns[c]] = nullptr;
        continue;
      }
      // Numeric cells become JSON numbers with the printed precision.
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      const bool numeric = end && *end == '\0' && cell.find_first_not_of("0123456789.-e+") ==
                                                      std::string::npos;
      if (numeric && cell.find_first_of(".e") == std::string::npos) {
        obj[columns[c]] = std::stoll(cell);
      } else if (numeric) {
        obj[columns[c]] = v;
      } else {
        obj[columns[c]] = cell;
      }
    }
    arr.push_back(std::move(obj));
  }
  return arr;
}

std::string Table::to_text() const {
  std::vector<std::size_t> width(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      os << std::left << std::setw(static_cast<int>(width[c] + (c + 1 < cells.size() ? 2 : 0)))
         << cells[c];
    }
    os << '\n';
  };
  line(columns);
  for (const auto& row : rows) line(row);
  return os.str();
}

namespace {

struct Cells {
  std::string r1, r2, rl, bleu, bert, overall;
};

Cells metric_cells(const TrialRecord& r) {
  if (!r.ok) return {};
  const auto& m = r.report;
  const double a = round4(m.rouge1), b = round4(m.rouge2), c = round4(m.rougeL),
               d = round4(m.bleu);
  std::optional<double> e;
  if (m.bertscore) e = round4(*m.bertscore);
  return {metrics::format4(a),
          metrics::format4(b),
          metrics::format4(c),
          metrics::format4(d),
          e ? metrics::format4(*e) : std::string(),
          metrics::format4(metrics::aggregate(a, b, c, d, e))};
}

}  // namespace

Table sweep_table(std::span<const TrialRecord> records) {
  Table t{kSweepColumns, {}};
  const auto best = select_best(records);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto c = metric_cells(r);
    t.rows.push_back({r.spec.model, std::to_string(r.spec.num_virtual_tokens), c.r1, c.r2, c.rl,
                      c.bleu, c.bert, c.overall, prompt::to_string(r.spec.encoder_type),
                      lr_string(r.spec.learning_rate),
                      r.ok ? std::to_string(r.trainable_parameters) : std::string(),
                      best && *best == i ? "*" : "", r.ok ? "ok" : "failed: " + r.error,
                      r.trial_hash});
  }
  return t;
}

std::string format_duration(double seconds) {
  const auto total = static_cast<long long>(std::llround(std::max(0.0, seconds)));
  std::ostringstream os;
  os << total / 3600 << 'h' << std::setw(2) << std::setfill('0') << (total / 60) % 60 << 'm'
     << std::setw(2) << total % 60 << 's';
  return os.str();
}

Table compare_table(const Comparison& cmp) {
  Table t{kCompareColumns, {}};
  for (const auto* r : {&cmp.fine_tune_arm, &cmp.prompt_arm}) {
    const auto c = metric_cells(*r);
    const bool ft = r->spec.mode == train::TrainMode::kFineTune;
    t.rows.push_back({r->spec.model, ft ? "Fine-tuning" : "Prompt tuning",
                      r->ok ? std::to_string(r->trainable_parameters) : std::string(),
                      r->ok ? format_duration(r->training_duration_seconds) : std::string(), c.r1,
                      c.r2, c.rl, c.bleu, c.bert, std::to_string(cmp.total_parameters)});
  }
  return t;
}

Table fewshot_table(std::span<const TrialRecord> records, std::size_t full_size) {
  Table t{kFewshotColumns, {}};
  for (const auto& r : records) {
    const auto c = metric_cells(r);
    const std::string sample = r.spec.sample_count == 0
                                   ? "Full dataset:" + std::to_string(full_size)
                                   : std::to_string(r.spec.sample_count);
    t.rows.push_back({r.spec.model, sample, c.r1, c.r2, c.rl, c.bert, c.bleu});
  }
  return t;
}

}  // namespace ptune::harness
