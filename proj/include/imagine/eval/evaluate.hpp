#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "imagine/eval/metrics.hpp"
#include "imagine/hash.hpp"
#include "imagine/model/imagine.hpp"
#include "imagine/pipeline.hpp"

namespace imagine::eval {

// Fixed metric conventions, folded into the report's config hash.
inline constexpr const char* kMetricConventions =
    "bleu2=corpus,uniform,unsmoothed;distinct=pooled;ppl=teacher-forced,eos-counted;decode=greedy";

namespace detail {

inline std::vector<const PreparedExample*> sorted_by_id(const std::vector<PreparedExample>& split) {
  std::vector<const PreparedExample*> out;
  out.reserve(split.size());
  for (const auto& ex : split) out.push_back(&ex);
  std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->id < b->id; });
  return out;
}

} // namespace detail

struct NllTotals {
  double nll = 0;
  std::size_t tokens = 0;
};

// Teacher-forced NLL summed over every response token (EOS included),
// accumulated in id order so the result does not depend on split order.
template <typename T>
NllTotals split_nll(const model::ImagineModel<T>& m, const std::vector<PreparedExample>& split) {
  num::NoGradGuard guard;
  NllTotals acc;
  for (const auto* ex : detail::sorted_by_id(split)) {
    if (ex->target.empty()) continue;
    with_example_context(ex->id, [&] {
      auto logits = m.teacher_forced_logits(m.encode(ex->input), ex->target);
      acc.nll += static_cast<double>(num::sequence_nll(logits, ex->target).item());
      acc.tokens += ex->target.size();
    });
  }
  return acc;
}

template <typename T>
double perplexity(const model::ImagineModel<T>& m, const std::vector<PreparedExample>& split) {
  if (split.empty()) throw ContractError("perplexity: empty split");
  const auto acc = split_nll(m, split);
  if (acc.tokens == 0) throw ContractError("perplexity: split has no reference responses");
  return std::exp(acc.nll / static_cast<double>(acc.tokens));
}

struct ExampleOutput {
  std::string id;
  std::vector<std::string> generated;
  std::string reference;
  int pred_emotion = -1;
  int gold_emotion = -1;
};

struct EvalReport {
  double ppl = 0, bleu2 = 0, distinct1 = 0, distinct2 = 0, emotion_acc = 0;
  std::size_t n_examples = 0;
  std::string config_hash;
};

inline nlohmann::json report_json(const EvalReport& r) {
  return {{"ppl", r.ppl},
          {"bleu2", r.bleu2},
          {"distinct1", r.distinct1},
          {"distinct2", r.distinct2},
          {"emotion_acc", r.emotion_acc},
          {"n_examples", r.n_examples},
          {"config_hash", r.config_hash}};
}

inline nlohmann::json response_json(const ExampleOutput& o, const corpus::EmotionLabels& labels) {
  return {{"id", o.id},
          {"generated", corpus::join_tokens(o.generated)},
          {"reference", o.reference},
          {"pred_emotion", o.pred_emotion >= 0 ? labels.name(o.pred_emotion) : std::string()}};
}

inline std::string config_hash(const model::ModelConfig& cfg) {
  const std::string key = nlohmann::json(cfg).dump() + "|" + kMetricConventions;
  return hex64(fnv1a(key));
}

// Greedy generation and emotion prediction for each example.
template <typename T>
ExampleOutput run_example(const model::ImagineModel<T>& m, const PreparedExample& ex, const corpus::Vocab& vocab) {
  num::NoGradGuard guard;
  return with_example_context(ex.id, [&] {
    ExampleOutput o;
    o.id = ex.id;
    o.reference = ex.reference;
    o.gold_emotion = ex.emotion;
    auto enc = m.encode(ex.input);
    o.pred_emotion = enc.predicted_emotion();
    for (int id : m.generate(enc)) o.generated.push_back(vocab.token(id));
    return o;
  });
}

struct Evaluation {
  EvalReport report;
  std::vector<ExampleOutput> outputs;  // in id order
};

// Perplexity on gold responses, then greedy outputs scored with BLEU-2,
// Distinct-1/2 and emotion accuracy. Aggregation runs in id order.
template <typename T>
Evaluation evaluate(const model::ImagineModel<T>& m, const std::vector<PreparedExample>& split,
                       const corpus::Vocab& vocab) {
  if (split.empty()) throw ContractError("evaluate: empty split");
  Evaluation ev;
  ev.report.n_examples = split.size();
  ev.report.config_hash = config_hash(m.config());
  ev.report.ppl = perplexity(m, split);

  std::vector<Sentence> cands, refs, generated;
  std::vector<int> preds, golds;
  for (const auto* ex : detail::sorted_by_id(split)) {
    auto o = run_example(m, *ex, vocab);
    generated.push_back(o.generated);
    if (!ex->reference.empty()) {
      cands.push_back(o.generated);
      refs.push_back(corpus::tokenize(ex->reference));
    }
    if (ex->emotion >= 0) {
      preds.push_back(o.pred_emotion);
      golds.push_back(ex->emotion);
    }
    ev.outputs.push_back(std::move(o));
  }
  ev.report.bleu2 = cands.empty() ? 0.0 : bleu2(cands, refs);
  ev.report.distinct1 = distinct_n(generated, 1);
  ev.report.distinct2 = distinct_n(generated, 2);
  ev.report.emotion_acc = emotion_accuracy(preds, golds);
  return ev;
}

} // namespace imagine::eval
