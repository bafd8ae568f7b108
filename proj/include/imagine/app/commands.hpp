#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "imagine/cause.hpp"
#include "imagine/corpus.hpp"
#include "imagine/eval/evaluate.hpp"
#include "imagine/knowledge.hpp"
#include "imagine/model/checkpoint.hpp"
#include "imagine/pipeline.hpp"
#include "imagine/training/trainer.hpp"

namespace imagine::app {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

// Maps the in-flight exception to an exit code and prints it.
inline int report_error(std::ostream& err) {
  try {
    throw;
  } catch (const ParseError& e) {  // includes SchemaError
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {  // includes VocabMismatchError
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("short write to " + p.string());
}

inline json parse_json_file(const fs::path& p) {
  const auto text = read_file(p);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  std::string corpus;
  std::string out;
  int min_freq = 1;
  std::string labels;  // empty: default 32-label set
};

inline corpus::EmotionLabels labels_from(const std::string& path) {
  return path.empty() ? corpus::EmotionLabels() : corpus::load_labels(path);
}

// A directory holds train/valid/test.jsonl (train required); a file is the
// train split on its own.
inline std::vector<std::pair<std::string, fs::path>> corpus_splits(const fs::path& corpus) {
  std::vector<std::pair<std::string, fs::path>> out;
  if (fs::is_directory(corpus)) {
    for (const char* name : {"train", "valid", "test"}) {
      auto p = corpus / (std::string(name) + ".jsonl");
      if (fs::exists(p)) out.emplace_back(name, p);
    }
    if (out.empty() || out.front().first != "train")
      throw IoError("corpus directory " + corpus.string() + " has no train.jsonl");
  } else {
    if (!fs::exists(corpus)) throw IoError("corpus not found: " + corpus.string());
    out.emplace_back("train", corpus);
  }
  return out;
}

inline std::string freq_table(const corpus::Vocab& vocab, const std::vector<double>& freq) {
  const auto fq = corpus::normalize_frequencies(freq);
  std::ostringstream out;
  out << "id\ttoken\tcount\tfq\n";
  for (std::size_t i = 0; i < vocab.size(); ++i)
    out << i << '\t' << vocab.token(static_cast<int>(i)) << '\t' << static_cast<long long>(freq[i]) << '\t'
        << fmt_double(fq[i]) << '\n';
  return out.str();
}

inline int cmd_preprocess(const PreprocessArgs& a, std::ostream& out, std::ostream& err) {
  try {
    if (a.min_freq < 1) throw ConfigError("--min-freq must be >= 1");
    const auto labels = labels_from(a.labels);
    const auto splits = corpus_splits(a.corpus);
    std::vector<std::pair<std::string, std::vector<corpus::Dialogue>>> loaded;
    for (const auto& [name, path] : splits) {
      try {
        loaded.emplace_back(name, corpus::load_dialogues(path.string(), labels));
      } catch (const SchemaError& e) {
        throw SchemaError(path.string() + ": " + e.what());
      } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
      }
    }
    const auto& train = loaded.front().second;
    const auto vocab = corpus::build_vocab(train, a.min_freq);
    const auto freq = corpus::token_frequencies(train, vocab);

    fs::create_directories(a.out);
    vocab.save((fs::path(a.out) / "vocab.txt").string());
    write_file(fs::path(a.out) / "freq.tsv", freq_table(vocab, freq));

    json summary;
    summary["min_freq"] = a.min_freq;
    summary["vocab_size"] = vocab.size();
    summary["vocab_hash"] = vocab.hash();
    summary["labels"] = labels.names();
    json sj = json::object();
    for (const auto& [name, ds] : loaded) {
      std::size_t ctx_tokens = 0, resp_tokens = 0, unk = 0;
      for (const auto& d : ds) {
        for (const auto& u : d.context)
          for (int id : vocab.encode(corpus::tokenize(u.text))) ++ctx_tokens, unk += id == corpus::kUnk;
        for (int id : vocab.encode(corpus::tokenize(d.target_response))) ++resp_tokens, unk += id == corpus::kUnk;
      }
      sj[name] = {{"dialogues", ds.size()},
                  {"context_tokens", ctx_tokens},
                  {"response_tokens", resp_tokens},
                  {"unk_tokens", unk}};
      out << name << ": " << ds.size() << " dialogues, " << ctx_tokens + resp_tokens << " tokens\n";
    }
    summary["splits"] = sj;
    write_file(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
    out << "vocab: " << vocab.size() << " entries, hash " << vocab.hash() << '\n';
    return kOk;
  } catch (...) {
    return report_error(err);
  }
}

// --------------------------------------------------------------- run config

struct RunConfig {
  fs::path train, valid, test;
  fs::path labels;     // empty: default label set
  fs::path lexicon;    // needed for heuristic causes
  fs::path knowledge;  // optional store; misses use the stub
  fs::path vocab;      // empty: built from the train split
  fs::path output_dir;
  int min_freq = 1;
  cause::Mode cause_mode = cause::Mode::oracle;
  std::string precision = "float64";
  model::ModelConfig model;
  training::TrainConfig train_cfg;
};

// Paths in the config resolve against the config file's directory.
inline RunConfig load_run_config(const fs::path& path) {
  const json j = parse_json_file(path);
  const fs::path base = path.parent_path();
  auto resolve = [&](const json& obj, const char* key, bool required) -> fs::path {
    if (!obj.contains(key) || obj[key].is_null()) {
      if (required) throw SchemaError(path.string() + ": missing required field \"" + key + "\"");
      return {};
    }
    if (!obj[key].is_string()) throw SchemaError(path.string() + ": field \"" + key + "\" must be a path string");
    fs::path p = obj[key].get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  RunConfig rc;
  try {
    if (!j.is_object()) throw SchemaError(path.string() + ": expected a JSON object");
    if (!j.contains("corpus") || !j["corpus"].is_object())
      throw SchemaError(path.string() + ": missing required field \"corpus\"");
    const auto& c = j["corpus"];
    rc.train = resolve(c, "train", true);
    rc.valid = resolve(c, "valid", false);
    rc.test = resolve(c, "test", false);
    rc.labels = resolve(j, "labels", false);
    rc.lexicon = resolve(j, "lexicon", false);
    rc.knowledge = resolve(j, "knowledge", false);
    rc.vocab = resolve(j, "vocab", false);
    rc.output_dir = resolve(j, "output_dir", true);
    if (j.contains("min_freq")) rc.min_freq = j["min_freq"].get<int>();
    if (j.contains("cause_mode")) rc.cause_mode = cause::parse_mode(j["cause_mode"].get<std::string>());
    if (j.contains("precision")) rc.precision = j["precision"].get<std::string>();
    if (j.contains("model")) rc.model = j["model"].get<model::ModelConfig>();
    if (j.contains("train")) {
      const auto& t = j["train"];
      auto& tc = rc.train_cfg;
      auto get = [&](const char* k, auto& v) {
        if (t.contains(k)) t.at(k).get_to(v);
      };
      get("learning_rate", tc.adam.learning_rate);
      get("beta1", tc.adam.beta1);
      get("beta2", tc.adam.beta2);
      get("eps", tc.adam.eps);
      get("batch_size", tc.batch_size);
      get("max_epochs", tc.max_epochs);
      get("max_steps", tc.max_steps);
      get("patience", tc.patience);
      get("seed", tc.seed);
      if (t.contains("face_mode")) tc.face_mode = training::parse_face_mode(t["face_mode"].get<std::string>());
      if (t.contains("lambdas")) {
        const auto& l = t["lambdas"];
        if (l.contains("gen")) tc.lambdas.gen = l["gen"].get<double>();
        if (l.contains("emo")) tc.lambdas.emo = l["emo"].get<double>();
        if (l.contains("cm")) tc.lambdas.cm = l["cm"].get<double>();
        if (l.contains("div")) tc.lambdas.div = l["div"].get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  if (rc.precision != "float32" && rc.precision != "float64")
    throw ConfigError("precision must be float32 or float64, got '" + rc.precision + "'");
  if (rc.min_freq < 1) throw ConfigError("min_freq must be >= 1");
  return rc;
}

// Existence checks run before any data is read or any step is taken.
inline void validate_run_config(const RunConfig& rc) {
  rc.train_cfg.validate();
  for (const auto* p : {&rc.train, &rc.valid, &rc.test, &rc.labels, &rc.lexicon, &rc.knowledge, &rc.vocab})
    if (!p->empty() && !fs::exists(*p)) throw ConfigError("referenced file does not exist: " + p->string());
  if (rc.cause_mode == cause::Mode::heuristic && rc.lexicon.empty())
    throw ConfigError("cause_mode heuristic needs a lexicon path");
}

inline Providers make_providers(cause::Mode mode, const fs::path& lexicon, const fs::path& knowledge) {
  Providers p{cause::CauseProvider::oracle(), {}};
  if (mode == cause::Mode::heuristic) {
    if (lexicon.empty() || !fs::exists(lexicon)) throw ConfigError("heuristic cause mode needs a lexicon file");
    p.cause = cause::CauseProvider::heuristic(cause::CauseProvider::load_lexicon(lexicon.string()));
  }
  if (!knowledge.empty()) p.store = knowledge::KnowledgeStore::load(knowledge.string());
  return p;
}

// Seed precedence: --seed flag, then IMAGINE_SEED, then the config file.
inline std::uint64_t resolve_seed(std::uint64_t config_seed, std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("IMAGINE_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("IMAGINE_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  return config_seed;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
};

inline constexpr const char* kLossCsvHeader = "step,l_gen,l_emo,l_cm,l_div,total";

inline std::string loss_csv_row(const training::LossRow& r) {
  return std::to_string(r.step) + "," + fmt_double(r.l_gen) + "," + fmt_double(r.l_emo) + "," +
         fmt_double(r.l_cm) + "," + fmt_double(r.l_div) + "," + fmt_double(r.total);
}

// Copies the vocabulary and provider files next to the weights so a
// checkpoint directory is self-contained.
inline void write_checkpoint_sidecars(const fs::path& dir, const RunConfig& rc, const corpus::Vocab& vocab) {
  fs::create_directories(dir);
  vocab.save((dir / "vocab.txt").string());
  if (!rc.lexicon.empty()) fs::copy_file(rc.lexicon, dir / "lexicon.txt", fs::copy_options::overwrite_existing);
  if (!rc.knowledge.empty())
    fs::copy_file(rc.knowledge, dir / "knowledge.jsonl", fs::copy_options::overwrite_existing);
}

inline json checkpoint_extra(const RunConfig& rc, const training::EpochReport& rep) {
  json splits = json::object();
  if (!rc.train.empty()) splits["train"] = fs::absolute(rc.train).lexically_normal().string();
  if (!rc.valid.empty()) splits["valid"] = fs::absolute(rc.valid).lexically_normal().string();
  if (!rc.test.empty()) splits["test"] = fs::absolute(rc.test).lexically_normal().string();
  return {{"cause_mode", cause::mode_name(rc.cause_mode)},
          {"lexicon", rc.lexicon.empty() ? json(nullptr) : json("lexicon.txt")},
          {"knowledge", rc.knowledge.empty() ? json(nullptr) : json("knowledge.jsonl")},
          {"splits", splits},
          {"epoch", rep.epoch},
          {"step", rep.steps},
          {"valid_ppl", rep.valid_ppl},
          {"seed", rc.train_cfg.seed},
          {"face_mode", training::face_mode_name(rc.train_cfg.face_mode)}};
}

template <typename T>
int run_training(const RunConfig& rc, std::ostream& out) {
  const auto labels = rc.labels.empty() ? corpus::EmotionLabels() : corpus::load_labels(rc.labels.string());
  const auto train_ds = corpus::load_dialogues(rc.train.string(), labels);
  const auto valid_ds =
      rc.valid.empty() ? std::vector<corpus::Dialogue>{} : corpus::load_dialogues(rc.valid.string(), labels);
  const auto vocab = rc.vocab.empty() ? corpus::build_vocab(train_ds, rc.min_freq) : corpus::Vocab::load(rc.vocab.string());
  const auto providers = make_providers(rc.cause_mode, rc.lexicon, rc.knowledge);

  auto mcfg = rc.model;
  mcfg.vocab_size = vocab.size();
  mcfg.num_emotions = labels.size();
  model::ImagineModel<T> m(mcfg);
  const auto train_ex = prepare_all(train_ds, vocab, labels, providers, mcfg.max_positions);
  const auto valid_ex = prepare_all(valid_ds, vocab, labels, providers, mcfg.max_positions);
  const auto freq = corpus::token_frequencies(train_ds, vocab);

  const fs::path out_dir = rc.output_dir;
  const fs::path ckpt = out_dir / "checkpoint";
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "loss.csv", std::ios::binary);
  if (!csv) throw IoError("cannot write " + (out_dir / "loss.csv").string());
  csv << kLossCsvHeader << '\n';

  training::TrainHooks<T> hooks;
  hooks.on_step = [&](const training::LossRow& r) { csv << loss_csv_row(r) << '\n'; };
  hooks.on_epoch = [&](const training::EpochReport& r) {
    out << "epoch " << r.epoch << " step " << r.steps << " valid_ppl " << std::setprecision(6) << r.valid_ppl
        << (r.improved ? " (best)" : "") << '\n';
  };
  hooks.on_improve = [&](const model::ImagineModel<T>& cur, const training::EpochReport& r) {
    write_checkpoint_sidecars(ckpt, rc, vocab);
    model::save_checkpoint(ckpt, cur, vocab.hash(), labels.names(), checkpoint_extra(rc, r));
  };
  const auto res = training::train(m, train_ex, valid_ex, freq, rc.train_cfg, hooks);
  csv.flush();
  if (!csv) throw IoError("short write to " + (out_dir / "loss.csv").string());
  out << "trained " << res.steps << " steps over " << res.epochs << " epochs; best valid_ppl "
      << std::setprecision(6) << res.best_ppl << " at epoch " << res.best_epoch
      << (res.early_stopped ? " (early stop)" : "") << "; cm heads skipped " << res.cm_skipped << '\n';
  out << "checkpoint: " << ckpt.string() << '\n';
  return kOk;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  try {
    auto rc = load_run_config(a.config);
    rc.train_cfg.seed = resolve_seed(rc.train_cfg.seed, a.seed);
    validate_run_config(rc);
    return rc.precision == "float32" ? run_training<float>(rc, out) : run_training<double>(rc, out);
  } catch (...) {
    return report_error(err);
  }
}

// ----------------------------------------------------------- checkpoint use

template <typename T>
struct LoadedCheckpoint {
  model::ImagineModel<T> model;
  model::Manifest manifest;
  corpus::Vocab vocab;
  corpus::EmotionLabels labels;
  Providers providers;
};

struct CheckpointOptions {
  std::string vocab;       // override; must match the stored hash
  std::string cause_mode;  // override; empty keeps the training mode
};

inline fs::path sidecar(const fs::path& dir, const json& extra, const char* key) {
  if (!extra.contains(key) || extra[key].is_null()) return {};
  return dir / extra[key].get<std::string>();
}

template <typename T>
LoadedCheckpoint<T> open_checkpoint(const fs::path& dir, const CheckpointOptions& opt) {
  const auto vocab_path = opt.vocab.empty() ? dir / "vocab.txt" : fs::path(opt.vocab);
  auto vocab = corpus::Vocab::load(vocab_path.string());
  model::Manifest man;
  auto m = model::load_checkpoint<T>(dir, vocab.hash(), &man);
  corpus::EmotionLabels labels(man.labels);
  auto mode = cause::parse_mode(opt.cause_mode.empty() ? man.extra.value("cause_mode", std::string("oracle"))
                                                       : opt.cause_mode);
  auto providers = make_providers(mode, sidecar(dir, man.extra, "lexicon"), sidecar(dir, man.extra, "knowledge"));
  return {std::move(m), std::move(man), std::move(vocab), std::move(labels), std::move(providers)};
}

inline std::string checkpoint_precision(const fs::path& dir) { return model::read_manifest(dir).precision; }

// Runs f<T> with T chosen by the checkpoint's stored precision.
template <typename F>
int with_precision(const fs::path& dir, F&& f) {
  return checkpoint_precision(dir) == "float32" ? f(float{}) : f(double{});
}

// A split is a JSONL path, or a split name recorded at training time.
inline fs::path resolve_split(const std::string& split, const json& extra) {
  if (fs::exists(split)) return split;
  if (extra.contains("splits") && extra["splits"].contains(split)) return extra["splits"][split].get<std::string>();
  throw IoError("split not found: " + split);
}

inline void write_responses(const fs::path& path, const std::vector<eval::ExampleOutput>& outs,
                            const corpus::EmotionLabels& labels) {
  std::string text;
  for (const auto& o : outs) text += eval::response_json(o, labels).dump() + "\n";
  write_file(path, text);
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt, split, report;
  std::string responses;  // optional JSONL of greedy outputs
  CheckpointOptions options;
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  try {
    return with_precision(a.ckpt, [&](auto tag) {
      using T = decltype(tag);
      auto ck = open_checkpoint<T>(a.ckpt, a.options);
      const auto split = resolve_split(a.split, ck.manifest.extra);
      const auto ds = corpus::load_dialogues(split.string(), ck.labels);
      const auto examples = prepare_all(ds, ck.vocab, ck.labels, ck.providers, ck.model.config().max_positions);
      const auto ev = eval::evaluate(ck.model, examples, ck.vocab);
      write_file(a.report, eval::report_json(ev.report).dump(2) + "\n");
      if (!a.responses.empty()) write_responses(a.responses, ev.outputs, ck.labels);
      const auto& r = ev.report;
      out << "n=" << r.n_examples << " ppl=" << fmt_double(r.ppl) << " bleu2=" << fmt_double(r.bleu2)
          << " distinct1=" << fmt_double(r.distinct1) << " distinct2=" << fmt_double(r.distinct2)
          << " emotion_acc=" << fmt_double(r.emotion_acc) << '\n';
      return static_cast<int>(kOk);
    });
  } catch (...) {
    return report_error(err);
  }
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
  std::string ckpt, input, out;
  CheckpointOptions options;
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream& err) {
  try {
    return with_precision(a.ckpt, [&](auto tag) {
      using T = decltype(tag);
      auto ck = open_checkpoint<T>(a.ckpt, a.options);
      const auto ds = corpus::load_dialogues(a.input, ck.labels, {false, false});
      std::vector<eval::ExampleOutput> outs;
      for (const auto& d : ds) {
        auto ex = prepare_example(d, ck.vocab, ck.labels, ck.providers, ck.model.config().max_positions);
        outs.push_back(eval::run_example(ck.model, ex, ck.vocab));
      }
      write_responses(a.out, outs, ck.labels);
      out << "generated " << outs.size() << " responses\n";
      return static_cast<int>(kOk);
    });
  } catch (...) {
    return report_error(err);
  }
}

// ---------------------------------------------------------------------- chat

struct ChatArgs {
  std::string ckpt;
  CheckpointOptions options;
};

template <typename T>
void chat_turn(const LoadedCheckpoint<T>& ck, const corpus::Dialogue& d, std::ostream& out,
               std::vector<std::string>& reply) {
  num::NoGradGuard guard;
  auto ex = prepare_example(d, ck.vocab, ck.labels, ck.providers, ck.model.config().max_positions);
  auto enc = ck.model.encode(ex.input);
  reply.clear();
  for (int id : ck.model.generate(enc)) reply.push_back(ck.vocab.token(id));
  out << "response: " << corpus::join_tokens(reply) << '\n';
  out << "[diagnostics]\n";
  out << "  context_utterances: " << d.context.size() << '\n';
  out << "  emotion: " << ck.labels.name(enc.predicted_emotion()) << '\n';
  out << "  causes:";
  for (int i : ex.causes) out << " [" << i << "] \"" << d.context[static_cast<std::size_t>(i)].text << '"';
  out << '\n';
  out << "  cm_yes:";
  for (std::size_t i = 0; i < model::kNumCm; ++i)
    out << ' ' << model::kCmNames[i] << '=' << std::fixed << std::setprecision(3) << enc.cm.yes_prob[i].item();
  out << std::defaultfloat << '\n';
  out << "  knowledge:\n";
  for (const auto& ri : knowledge::kTaxonomy) {
    const auto& ents = ex.entities[static_cast<std::size_t>(ri.relation)];
    out << "    " << ri.name << ": " << corpus::join_tokens(std::vector<std::string>(ents.begin(), ents.begin() + 3))
        << '\n';
  }
  out << "  stub: " << (ex.store_misses ? "yes" : "no") << " (" << ex.store_misses << " of "
      << knowledge::kNumRelations << " relations from stub)\n";
}

inline int cmd_chat(const ChatArgs& a, std::istream& in, std::ostream& out, std::ostream& err) {
  try {
    return with_precision(a.ckpt, [&](auto tag) {
      using T = decltype(tag);
      auto opts = a.options;
      if (opts.cause_mode.empty()) opts.cause_mode = "heuristic";
      auto ck = open_checkpoint<T>(a.ckpt, opts);
      corpus::Dialogue d;
      d.id = "chat";
      std::vector<std::string> reply;
      std::string line;
      out << "commands: /reset clears context, /quit exits\n";
      while (std::getline(in, line)) {
        const auto text = corpus::normalize_whitespace(line);
        if (text.empty()) continue;
        if (text == "/quit") break;
        if (text == "/reset") {
          d.context.clear();
          out << "context cleared\n";
          continue;
        }
        d.context.push_back({corpus::Role::speaker, text});
        try {
          chat_turn(ck, d, out, reply);
        } catch (const std::exception& e) {
          d.context.pop_back();
          err << "error: " << e.what() << '\n';
          continue;
        }
        if (!reply.empty()) d.context.push_back({corpus::Role::listener, corpus::join_tokens(reply)});
      }
      return static_cast<int>(kOk);
    });
  } catch (...) {
    return report_error(err);
  }
}

} // namespace imagine::app
