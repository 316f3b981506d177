// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ptune/checkpoint.hpp"
#include "ptune/corpus.hpp"
#include "ptune/error.hpp"
#include "ptune/generation.hpp"
#include "ptune/harness.hpp"
#include "ptune/metrics.hpp"
#include "ptune/model.hpp"
#include "ptune/prompt.hpp"
#include "ptune/rng.hpp"
#include "ptune/synthetic.hpp"
#include "ptune/tokenizer.hpp"
#include "ptune/training.hpp"

namespace ptune {

namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

bool has_ext(const fs::path& p, std::initializer_list<const char*> exts) {
  const auto e = p.extension().string();
  return std::any_of(exts.begin(), exts.end(), [&](const char* x) { return e == x; });
}

// Reads documents from JSON lines ({"text": ...}) or from plain text split
// on blank lines.
std::vector<std::string> read_documents(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<std::string> docs;
  if (has_ext(path, {".jsonl", ".ndjson"})) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        docs.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
      }
    }
  } else {
    std::size_t start = 0;
    while (start < text.size()) {
      auto end = text.find("\n\n", start);
      if (end == std::string::npos) end = text.size();
      auto doc = text.substr(start, end - start);
      if (doc.find_first_not_of(" \t\r\n") != std::string::npos) docs.push_back(doc);
      start = end + 2;
    }
  }
  if (docs.empty()) throw DataError(path.string() + " holds no documents");
  return docs;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::string model_name_of(const model::TransformerConfig& c) {
  if (c == model::TransformerConfig::toy_s(c.vocab_size)) return "toy-S";
  if (c == model::TransformerConfig::toy_m(c.vocab_size)) return "toy-M";
  return "custom";
}

// ---- option groups ------------------------------------------------------------

struct DataOptions {
  std::string train, validation, test, vocab, base, out = "runs";
  std::string scorer;
};

void add_data_options(CLI::App* sub, DataOptions& d, bool need_test = true) {
  sub->add_option("--train", d.train, "training split (CSV or JSON lines)")->required();
  sub->add_option("--validation", d.validation, "validation split")->required();
  auto* t = sub->add_option("--test", d.test, "test split");
  if (need_test) t->required();
  sub->add_option("--vocab", d.vocab, "vocabulary JSON")->required();
  sub->add_option("--base", d.base, "pretrained transformer checkpoint")->required();
  sub->add_option("--out", d.out, "output directory");
  sub->add_option("--scorer", d.scorer, "external BERTScore command");
}

void add_generation_options(CLI::App* sub, gen::GenerationConfig& g) {
  sub->add_option("--top-k", g.top_k, "top-k filter");
  sub->add_option("--top-p", g.top_p, "nucleus mass");
  sub->add_option("--temperature", g.temperature, "softmax temperature");
  sub->add_option("--max-new-tokens", g.max_new_tokens, "generation cap in tokens");
}

struct TrialOptions {
  harness::TrialSpec spec;
  std::string encoder = "lstm";
  std::string selection = "val_loss";
};

void add_trial_options(CLI::App* sub, TrialOptions& t, bool with_tokens, bool with_lr) {
  sub->add_option("--encoder", t.encoder, "prompt encoder: mlp or lstm");
  if (with_tokens) sub->add_option("--virtual-tokens", t.spec.num_virtual_tokens, "virtual tokens");
  sub->add_option("--lstm-layers", t.spec.lstm_layers, "LSTM layers");
  sub->add_option("--lstm-hidden", t.spec.lstm_hidden, "LSTM hidden size (both directions)");
  sub->add_option("--mlp-hidden", t.spec.mlp_hidden, "MLP hidden size (0 = model width)");
  if (with_lr) sub->add_option("--lr", t.spec.learning_rate, "learning rate");
  sub->add_option("--epochs", t.spec.max_epochs, "maximum epochs (<= 20)");
  sub->add_option("--batch-size", t.spec.batch_size, "batch size");
  sub->add_option("--warmup", t.spec.warmup_steps, "warmup steps");
  sub->add_option("--selection", t.selection, "checkpoint selection: val_loss or rougeL");
}

harness::TrialSpec resolve_trial(TrialOptions t, const std::string& model, std::uint64_t seed) {
  t.spec.encoder_type = prompt::encoder_type_from_string(t.encoder);
  t.spec.selection_metric = train::selection_metric_from_string(t.selection);
  t.spec.model = model;
  t.spec.seed = seed;
  return t.spec;
}

harness::Environment make_env(const DataOptions& d, const gen::GenerationConfig& g) {
  harness::Environment env;
  env.splits.train = corpus::load_split(d.train);
  env.splits.validation = corpus::load_split(d.validation);
  if (!d.test.empty()) env.splits.test = corpus::load_split(d.test);
  env.vocab = bpe::Vocab::load(d.vocab);
  env.base = model::load_transformer(d.base);
  env.base.set_frozen(true);
  env.model_name = model_name_of(env.base.config());
  env.out_dir = d.out;
  env.generation = g;
  env.generation.validate();
  env.scorer_command = d.scorer;
  return env;
}

void emit_table(const harness::Table& t, const fs::path& dir, const std::string& stem,
                std::ostream& out) {
  fs::create_directories(dir);
  write_file(dir / (stem + ".csv"), t.to_csv());
  write_file(dir / (stem + ".json"), t.to_json().dump(2) + "\n");
  out << t.to_text();
}

// Turns a flat JSON config into leading arguments for the chosen
// subcommand, so explicit flags that follow take precedence.
std::vector<std::string> config_args(const nlohmann::json& cfg, CLI::App* sub) {
  std::vector<std::string> args;
  if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (flag == "--config" || flag == "--seed" || !sub->get_option_no_throw(flag)) {
      if (flag == "--seed") {
        args.push_back(flag);
        args.push_back(value.dump());
        continue;
      }
      throw ConfigError("config key '" + key + "' is not an option of '" + sub->get_name() + "'");
    }
    auto scalar = [](const nlohmann::json& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    };
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back(flag);
        args.push_back(scalar(v));
      }
    } else {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ptune: soft prompt tuning for small transformer summarizers", "ptune"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::uint64_t seed = 0;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON file with option values");
    sub->add_option("--seed", seed, "random seed");
    sub->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  };

  // stats
  std::string st_train, st_val, st_test, st_format = "text", st_out;
  auto* stats = app.add_subcommand("stats", "dataset statistics table");
  stats->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  add_common(stats);
  stats->add_option("--train", st_train, "training split")->required();
  stats->add_option("--validation", st_val, "validation split");
  stats->add_option("--test", st_test, "test split");
  stats->add_option("--format", st_format, "text or json")->check(CLI::IsMember({"text", "json"}));
  stats->add_option("--out", st_out, "also write the JSON table here");

  // synth
  std::string sy_out = "data";
  std::size_t sy_train = 32, sy_val = 8, sy_test = 16, sy_docs = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic dialogue corpus");
  add_common(synth);
  synth->add_option("--out", sy_out, "output directory");
  synth->add_option("--train-size", sy_train, "training examples");
  synth->add_option("--validation-size", sy_val, "validation examples");
  synth->add_option("--test-size", sy_test, "test examples");
  synth->add_option("--lm-docs", sy_docs, "also write this many pretraining documents");

  // pretrain
  std::string pt_model = "toy-M", pt_vocab, pt_vocab_out, pt_corpus, pt_out;
  std::size_t pt_vocab_size = 512, pt_docs = 2000;
  int pt_log = 100;
  train::PretrainConfig pt;
  auto* pretrain = app.add_subcommand("pretrain", "train the toy base language model");
  add_common(pretrain);
  pretrain->add_option("--model", pt_model, "toy-S or toy-M");
  pretrain->add_option("--vocab", pt_vocab, "existing vocabulary JSON");
  pretrain->add_option("--vocab-size", pt_vocab_size, "BPE vocabulary size when training one");
  pretrain->add_option("--vocab-out", pt_vocab_out, "where to write a trained vocabulary");
  pretrain->add_option("--corpus", pt_corpus, "documents (JSON lines or blank-line separated)");
  pretrain->add_option("--synthetic-docs", pt_docs, "synthetic documents when no corpus is given");
  pretrain->add_option("--steps", pt.steps, "optimizer steps");
  pretrain->add_option("--batch-size", pt.batch_size, "windows per step");
  pretrain->add_option("--seq-len", pt.seq_len, "window length");
  pretrain->add_option("--lr", pt.base_lr, "peak learning rate");
  pretrain->add_option("--warmup", pt.warmup_steps, "warmup steps");
  pretrain->add_option("--min-lr", pt.min_lr, "final learning rate");
  pretrain->add_option("--log-every", pt_log, "print the loss every N steps (0 = never)");
  pretrain->add_option("--out", pt_out, "checkpoint path")->required();

  // train
  DataOptions tr_data;
  TrialOptions tr_trial;
  std::string tr_mode = "prompt_tune";
  bool tr_fold = false;
  gen::GenerationConfig tr_gen;
  auto* trainc = app.add_subcommand("train", "prompt-tune or fine-tune on a dataset");
  add_common(trainc);
  add_data_options(trainc, tr_data, false);
  add_trial_options(trainc, tr_trial, true, true);
  add_generation_options(trainc, tr_gen);
  trainc->add_option("--mode", tr_mode, "prompt_tune or fine_tune");
  trainc->add_flag("--fold", tr_fold, "also export the prompt as fixed embedding rows");

  // generate
  std::string ge_base, ge_prompt, ge_vocab, ge_input = "-", ge_out;
  gen::GenerationConfig ge_cfg;
  bool ge_no_cache = false;
  auto* generate = app.add_subcommand("generate", "summarize dialogues");
  add_common(generate);
  generate->add_option("--base", ge_base, "transformer checkpoint")->required();
  generate->add_option("--prompt", ge_prompt, "prompt encoder or folded prompt checkpoint");
  generate->add_option("--vocab", ge_vocab, "vocabulary JSON")->required();
  generate->add_option("--input", ge_input, "dialogues: CSV/JSON lines split, text lines, or -");
  generate->add_option("--out", ge_out, "write summaries here instead of standard output");
  add_generation_options(generate, ge_cfg);
  generate->add_flag("--no-cache", ge_no_cache, "recompute the full prefix every step");

  // evaluate
  std::string ev_pred, ev_test, ev_scorer, ev_out;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against a test split");
  add_common(evaluate);
  evaluate->add_option("--pred", ev_pred, "JSON lines {id, candidate}")->required();
  evaluate->add_option("--test", ev_test, "reference split")->required();
  evaluate->add_option("--scorer", ev_scorer, "external BERTScore command");
  evaluate->add_option("--out", ev_out, "write the JSON report here");

  // sweep
  DataOptions sw_data;
  TrialOptions sw_trial;
  gen::GenerationConfig sw_gen;
  std::vector<int> sw_tokens = {8, 16, 32};
  std::vector<std::string> sw_encoders = {"mlp", "lstm"};
  std::vector<double> sw_lrs = {1e-4};
  auto* sweepc = app.add_subcommand("sweep", "grid over virtual tokens, encoders and learning rates");
  add_common(sweepc);
  add_data_options(sweepc, sw_data);
  add_trial_options(sweepc, sw_trial, false, false);
  add_generation_options(sweepc, sw_gen);
  sweepc->add_option("--virtual-tokens", sw_tokens, "virtual token sizes")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sweepc->add_option("--encoders", sw_encoders, "encoder types")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  sweepc->add_option("--lrs", sw_lrs, "learning rates")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  // fewshot
  DataOptions fs_data;
  TrialOptions fs_trial;
  gen::GenerationConfig fs_gen;
  std::vector<std::size_t> fs_sizes = {5, 10, 20};
  auto* fewshot = app.add_subcommand("fewshot", "few-shot learning curve");
  add_common(fewshot);
  add_data_options(fewshot, fs_data);
  add_trial_options(fewshot, fs_trial, true, true);
  add_generation_options(fewshot, fs_gen);
  fewshot->add_option("--sizes", fs_sizes, "ascending sample sizes; 0 means the full split")
      ->delimiter(',')
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  // compare
  DataOptions cm_data;
  TrialOptions cm_trial;
  gen::GenerationConfig cm_gen;
  double cm_ft_lr = 0.0;
  auto* compare = app.add_subcommand("compare", "prompt tuning against full fine-tuning");
  add_common(compare);
  add_data_options(compare, cm_data);
  add_trial_options(compare, cm_trial, true, true);
  add_generation_options(compare, cm_gen);
  compare->add_option("--ft-lr", cm_ft_lr, "fine-tuning learning rate (default: --lr)");

  std::vector<std::string> args = raw_args;
  try {
    // Expand --config before parsing so flags on the command line win.
    auto it = std::find(args.begin(), args.end(), "--config");
    if (it != args.end() && it + 1 != args.end() && !args.empty()) {
      const fs::path cfg_path = *(it + 1);
      CLI::App* sub = nullptr;
      for (auto* s : app.get_subcommands({})) {
        if (s->get_name() == args[0]) sub = s;
      }
      if (sub) {
        nlohmann::json cfg;
        try {
          cfg = nlohmann::json::parse(read_file(cfg_path));
        } catch (const nlohmann::json::parse_error& e) {
          throw ConfigError("malformed config " + cfg_path.string() + ": " + e.what());
        }
        auto extra = config_args(cfg, sub);
        args.insert(args.begin() + 1, extra.begin(), extra.end());
      }
    }
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }

  try {
    if (stats->parsed()) {
      corpus::SplitSet s;
      s.train = corpus::load_split(st_train);
      if (!st_val.empty()) s.validation = corpus::load_split(st_val);
      if (!st_test.empty()) s.test = corpus::load_split(st_test);
      const auto rows = corpus::dataset_stats(s);
      if (!st_out.empty()) write_file(st_out, corpus::stats_to_json(rows).dump(2) + "\n");
      if (st_format == "json") {
        out << corpus::stats_to_json(rows).dump(2) << '\n';
      } else {
        out << corpus::stats_to_text(rows);
      }
    } else if (synth->parsed()) {
      const auto splits = synthetic::generate_splits(sy_train, sy_val, sy_test, seed);
      fs::create_directories(sy_out);
      corpus::write_csv(fs::path(sy_out) / "train.csv", splits.train);
      corpus::write_csv(fs::path(sy_out) / "validation.csv", splits.validation);
      corpus::write_csv(fs::path(sy_out) / "test.csv", splits.test);
      if (sy_docs > 0) {
        std::ostringstream docs;
        for (const auto& d : synthetic::lm_corpus(sy_docs, derive_seed(seed, 7))) {
          docs << nlohmann::json{{"text", d}}.dump() << '\n';
        }
        write_file(fs::path(sy_out) / "lm_corpus.jsonl", docs.str());
      }
      out << "wrote " << sy_train << '/' << sy_val << '/' << sy_test << " examples to " << sy_out
          << '\n';
    } else if (pretrain->parsed()) {
      const auto docs = pt_corpus.empty() ? synthetic::lm_corpus(pt_docs, derive_seed(seed, 7))
                                          : read_documents(pt_corpus);
      bpe::Vocab vocab = pt_vocab.empty() ? bpe::train_bpe(docs, pt_vocab_size, seed)
                                          : bpe::Vocab::load(pt_vocab);
      if (pt_vocab.empty()) {
        const fs::path vp = pt_vocab_out.empty() ? fs::path(pt_out).replace_extension(".vocab.json")
                                                 : fs::path(pt_vocab_out);
        if (vp.has_parent_path()) fs::create_directories(vp.parent_path());
        vocab.save(vp);
        out << "vocabulary (" << vocab.size() << " tokens) -> " << vp.string() << '\n';
      }
      const auto cfg =
          model::TransformerConfig::preset(pt_model, static_cast<int>(vocab.size()));
      pt.seed = seed;
      auto res = train::pretrain_toy_lm(docs, vocab, cfg, pt, [&](std::int64_t s, double loss) {
        if (pt_log > 0 && (s % pt_log == 0 || s + 1 == pt.steps)) {
          out << "step " << s << " loss " << metrics::format4(loss) << '\n';
        }
      });
      if (fs::path(pt_out).has_parent_path()) fs::create_directories(fs::path(pt_out).parent_path());
      model::save_transformer(pt_out, res.weights, seed, pt.steps);
      out << "checkpoint -> " << pt_out << '\n';
    } else if (trainc->parsed()) {
      auto env = make_env(tr_data, tr_gen);
      auto spec = resolve_trial(tr_trial, env.model_name, seed);
      spec.mode = train::train_mode_from_string(tr_mode);
      const fs::path dir = tr_data.out;
      fs::create_directories(dir);
      std::ofstream history(dir / "history.jsonl", std::ios::binary | std::ios::trunc);
      std::ofstream timing(dir / "timing.jsonl", std::ios::binary | std::ios::trunc);
      const auto result = train::train(
          env.splits.train, env.splits.validation, env.vocab, env.base, spec.mode,
          spec.encoder_config(env.base.config().d_model), spec.train_config(env.generation),
          [&](const train::EpochRecord& e) {
            history << e.to_json().dump() << '\n';
            timing << nlohmann::json{{"epoch", e.epoch}, {"seconds", e.seconds}}.dump() << '\n';
            out << "epoch " << e.epoch << " train_loss " << metrics::format4(e.train_loss) << ' '
                << train::to_string(spec.selection_metric) << ' '
                << metrics::format4(e.val_metric) << '\n';
          });
      write_file(dir / "checkpoint.bin", checkpoint::serialize(result.best));
      if (tr_fold && spec.mode == train::TrainMode::kPromptTune) {
        const auto enc = prompt::encoder_from_container(result.best);
        write_file(dir / "prompt_folded.bin",
                   checkpoint::serialize(prompt::folded_container(enc, seed, result.best.step)));
      }
      nlohmann::json summary = {{"spec", spec.to_json()},
                                {"best_epoch", result.best_epoch},
                                {"best_metric", result.best_metric},
                                {"steps", result.steps},
                                {"trainable_parameters", result.trainable_parameters}};
      write_file(dir / "summary.json", summary.dump(2) + "\n");
      out << "best epoch " << result.best_epoch << ", " << result.trainable_parameters
          << " trainable parameters, checkpoint -> " << (dir / "checkpoint.bin").string() << '\n';
    } else if (generate->parsed()) {
      const auto vocab = bpe::Vocab::load(ge_vocab);
      auto weights = model::load_transformer(ge_base);
      weights.set_frozen(true);
      std::optional<ag::Tensor<float>> virt;
      if (!ge_prompt.empty()) virt = prompt::load_virtual_embeddings(ge_prompt);
      ge_cfg.seed = seed;
      ge_cfg.use_cache = !ge_no_cache;
      std::vector<std::string> dialogues;
      std::vector<std::string> ids;  // set for split inputs, which produce prediction JSON lines
      if (ge_input != "-" && has_ext(ge_input, {".csv", ".jsonl", ".json", ".ndjson"})) {
        for (const auto& e : corpus::load_split(ge_input)) {
          dialogues.push_back(e.dialogue);
          ids.push_back(e.id);
        }
      } else {
        std::istringstream file_in(ge_input == "-" ? std::string() : read_file(ge_input));
        std::istream& in = ge_input == "-" ? std::cin : static_cast<std::istream&>(file_in);
        std::string line;
        while (std::getline(in, line)) {
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (!line.empty()) dialogues.push_back(line);
        }
      }
      std::ostringstream summaries;
      for (std::size_t i = 0; i < dialogues.size(); ++i) {
        auto text = gen::generate(weights, virt ? &*virt : nullptr, vocab, dialogues[i], ge_cfg);
        if (ids.empty()) {
          summaries << one_line(text) << '\n';
        } else {
          summaries << nlohmann::json{{"id", ids[i]}, {"candidate", text}}.dump() << '\n';
        }
      }
      if (ge_out.empty()) {
        out << summaries.str();
      } else {
        write_file(ge_out, summaries.str());
      }
    } else if (evaluate->parsed()) {
      const auto test = corpus::load_split(ev_test);
      std::map<std::string, std::string> refs;
      for (const auto& e : test) refs[e.id] = e.summary;
      std::vector<metrics::Pair> pairs;
      std::istringstream in(read_file(ev_pred));
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::string id, cand;
        try {
          const auto j = nlohmann::json::parse(line);
          id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
          cand = j.at("candidate").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          throw DataError(ev_pred + " line " + std::to_string(lineno) + ": " + e.what());
        }
        auto r = refs.find(id);
        if (r == refs.end()) throw DataError("prediction id '" + id + "' is not in the test split");
        pairs.push_back({cand, r->second});
      }
      metrics::EvaluateOptions opts;
      opts.scorer_command = ev_scorer;
      const auto rep = metrics::evaluate(pairs, opts);
      if (!ev_out.empty()) write_file(ev_out, rep.to_json().dump(2) + "\n");
      out << rep.to_json().dump(2) << '\n' << rep.to_text();
    } else if (sweepc->parsed()) {
      auto env = make_env(sw_data, sw_gen);
      const auto base = resolve_trial(sw_trial, env.model_name, seed);
      harness::Grid grid;
      grid.num_virtual_tokens = sw_tokens;
      grid.encoder_types.clear();
      for (const auto& e : sw_encoders) grid.encoder_types.push_back(prompt::encoder_type_from_string(e));
      grid.learning_rates = sw_lrs;
      const auto specs = harness::expand_grid(base, grid);
      const auto res = harness::sweep(env, specs);
      emit_table(harness::sweep_table(res.records), env.out_dir, "sweep", out);
      std::int64_t steps = 0;
      for (const auto& r : res.records) steps += r.steps_executed;
      out << "trials: " << res.records.size() << ", training steps executed: " << steps << '\n';
      const bool all_ok = std::all_of(res.records.begin(), res.records.end(),
                                      [](const harness::TrialRecord& r) { return r.ok; });
      if (!all_ok) return kExitRuntime;
    } else if (fewshot->parsed()) {
      auto env = make_env(fs_data, fs_gen);
      const auto base = resolve_trial(fs_trial, env.model_name, seed);
      const auto recs = harness::fewshot_curve(env, fs_sizes, seed, base);
      emit_table(harness::fewshot_table(recs, env.splits.train.size()), env.out_dir, "fewshot", out);
      for (const auto& r : recs) {
        if (!r.ok) return kExitRuntime;
      }
    } else if (compare->parsed()) {
      auto env = make_env(cm_data, cm_gen);
      const auto prompt_spec = resolve_trial(cm_trial, env.model_name, seed);
      auto ft_spec = prompt_spec;
      if (cm_ft_lr > 0) ft_spec.learning_rate = cm_ft_lr;
      const auto cmp = harness::compare_modes(env, prompt_spec, ft_spec);
      emit_table(harness::compare_table(cmp), env.out_dir, "compare", out);
      if (!cmp.prompt_arm.ok || !cmp.fine_tune_arm.ok) return kExitRuntime;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ptune
