#pragma once

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "imagine/app/commands.hpp"

namespace imagine::app {

// Parses argv and runs one subcommand. Streams are injectable for tests.
inline int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Empathetic response generation with emotion causes and commonsense knowledge", "imagine"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "Validate a corpus and write vocabulary and frequency files");
  p->add_option("--corpus", pre.corpus, "Corpus JSONL file or directory with train/valid/test.jsonl")->required();
  p->add_option("--out", pre.out, "Output directory")->required();
  p->add_option("--min-freq", pre.min_freq, "Minimum token frequency for the vocabulary")->capture_default_str();
  p->add_option("--labels", pre.labels, "Emotion label file (default: 32-label set)");

  TrainArgs tr;
  std::uint64_t seed = 0;
  auto* t = app.add_subcommand("train", "Train a model from a JSON run config");
  t->add_option("--config", tr.config, "Run config JSON")->required();
  auto* seed_opt = t->add_option("--seed", seed, "Seed override (beats IMAGINE_SEED and the config)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a split");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint directory")->required();
  e->add_option("--split", ev.split, "Split JSONL path or a split name recorded at training")->required();
  e->add_option("--report", ev.report, "Report JSON output path")->required();
  e->add_option("--responses", ev.responses, "Optional responses JSONL output path");
  e->add_option("--vocab", ev.options.vocab, "Vocabulary file overriding the checkpoint copy");
  e->add_option("--cause-mode", ev.options.cause_mode, "oracle or heuristic");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Greedy responses for a JSONL of contexts");
  g->add_option("--ckpt", gen.ckpt, "Checkpoint directory")->required();
  g->add_option("--input", gen.input, "Input JSONL (response optional)")->required();
  g->add_option("--out", gen.out, "Responses JSONL output path")->required();
  g->add_option("--vocab", gen.options.vocab, "Vocabulary file overriding the checkpoint copy");
  g->add_option("--cause-mode", gen.options.cause_mode, "oracle or heuristic");

  ChatArgs ch;
  auto* c = app.add_subcommand("chat", "Interactive REPL with pipeline diagnostics");
  c->add_option("--ckpt", ch.ckpt, "Checkpoint directory")->required();
  c->add_option("--cause-mode", ch.options.cause_mode, "oracle or heuristic (default heuristic)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& x) {
    return app.exit(x, out, err);
  } catch (const CLI::CallForAllHelp& x) {
    return app.exit(x, out, err);
  } catch (const CLI::Success& x) {
    return app.exit(x, out, err);
  } catch (const CLI::ParseError& x) {
    app.exit(x, out, err);
    return kUsage;
  }

  if (p->parsed()) return cmd_preprocess(pre, out, err);
  if (t->parsed()) {
    if (seed_opt->count()) tr.seed = seed;
    return cmd_train(tr, out, err);
  }
  if (e->parsed()) return cmd_eval(ev, out, err);
  if (g->parsed()) return cmd_generate(gen, out, err);
  if (c->parsed()) return cmd_chat(ch, in, out, err);
  return kUsage;
}

} // namespace imagine::app
