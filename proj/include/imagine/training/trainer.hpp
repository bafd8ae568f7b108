#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "imagine/eval/evaluate.hpp"
#include "imagine/pipeline.hpp"
#include "imagine/training/adam.hpp"
#include "imagine/training/losses.hpp"

namespace imagine::training {

enum class FaceMode { static_counts, cumulative };

inline FaceMode parse_face_mode(const std::string& s) {
  if (s == "static") return FaceMode::static_counts;
  if (s == "cumulative") return FaceMode::cumulative;
  throw ConfigError("unknown face_mode '" + s + "' (expected static or cumulative)");
}

inline const char* face_mode_name(FaceMode m) { return m == FaceMode::static_counts ? "static" : "cumulative"; }

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 1;  // examples accumulated per optimizer step
  std::size_t max_epochs = 20;
  std::size_t max_steps = 0;   // 0: no step limit
  std::size_t patience = 3;
  std::uint64_t seed = 1;
  FaceMode face_mode = FaceMode::static_counts;
  Lambdas lambdas;

  void validate() const {
    if (!(adam.learning_rate > 0) || !std::isfinite(adam.learning_rate))
      throw ConfigError("learning_rate must be > 0, got " + std::to_string(adam.learning_rate));
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1))
      throw ConfigError("adam betas must lie in [0, 1)");
    if (!(adam.eps > 0)) throw ConfigError("adam eps must be > 0");
    for (double l : {lambdas.gen, lambdas.emo, lambdas.cm, lambdas.div})
      if (!(l >= 0) || !std::isfinite(l)) throw ConfigError("loss weights must be finite and >= 0");
  }
};

struct LossRow {
  std::size_t step = 0;
  double l_gen = 0, l_emo = 0, l_cm = 0, l_div = 0, total = 0;
};

// Stop once the last `patience` values all fail to beat the best value
// seen before them.
inline bool early_stop_check(const std::vector<double>& history, std::size_t patience) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (history.size() <= patience) return false;
  const auto split = history.end() - static_cast<std::ptrdiff_t>(patience);
  const double best_before = *std::min_element(history.begin(), split);
  return std::all_of(split, history.end(), [&](double v) { return !(v < best_before); });
}

template <typename T>
struct ExampleLoss {
  TotalLoss<T> loss;
  std::size_t cm_skipped = 0;
};

// All four losses for one example under teacher forcing.
template <typename T>
ExampleLoss<T> example_loss(const model::ImagineModel<T>& m, const PreparedExample& ex,
                            const std::vector<T>& face, const Lambdas& lambdas) {
  return with_example_context(ex.id, [&] {
    if (ex.target.empty()) throw ContractError("training example has no response");
    auto enc = m.encode(ex.input);
    auto logits = m.teacher_forced_logits(enc, ex.target);
    auto gen = generation_loss(logits, ex.target);
    auto div = diversity_loss(logits, ex.target, face);
    auto emo = ex.emotion >= 0 ? num::cross_entropy_from_logits(enc.emotion_logits, ex.emotion)
                               : Tensor<T>::scalar(T(0));
    auto cm = cm_loss(enc.cm.logits, ex.cm);
    ExampleLoss<T> out{total_loss(gen, emo, cm.loss, div, lambdas), cm.skipped_heads};
    return out;
  });
}

// Response token counts of one example, EOS excluded.
inline void count_targets(const PreparedExample& ex, std::vector<double>& counts) {
  for (int id : ex.target)
    if (id != corpus::kEos) counts[static_cast<std::size_t>(id)] += 1.0;
}

template <typename T>
std::vector<T> face_vector(const std::vector<double>& freq) {
  auto w = face_weights(freq);
  return std::vector<T>(w.begin(), w.end());
}

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;  // optimizer steps so far
  double valid_ppl = 0;
  bool improved = false;
};

template <typename T>
struct TrainHooks {
  std::function<void(const LossRow&)> on_step;
  std::function<void(const EpochReport&)> on_epoch;
  // Called after each validation improvement with the current weights.
  std::function<void(const model::ImagineModel<T>&, const EpochReport&)> on_improve;
};

struct TrainResult {
  std::vector<LossRow> history;
  std::vector<double> valid_ppl;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  std::size_t best_epoch = 0;
  double best_ppl = std::numeric_limits<double>::infinity();
  std::size_t cm_skipped = 0;
  bool early_stopped = false;
};

// Adam over shuffled examples with per-epoch validation perplexity, early
// stopping and best-weight restoration. `static_freq` holds whole-train-split
// response token counts and is used when face_mode is static. An empty
// validation split falls back to the training split.
template <typename T>
TrainResult train(model::ImagineModel<T>& m, const std::vector<PreparedExample>& train_split,
                  const std::vector<PreparedExample>& valid_split, const std::vector<double>& static_freq,
                  const TrainConfig& cfg, const TrainHooks<T>& hooks = {}) {
  cfg.validate();
  if (train_split.empty()) throw ContractError("train: empty training split");
  const std::size_t V = m.config().vocab_size;
  if (static_freq.size() != V)
    throw DimensionError("train: frequency vector has " + std::to_string(static_freq.size()) +
                         " entries, vocabulary has " + std::to_string(V));
  const auto& valid = valid_split.empty() ? train_split : valid_split;

  std::vector<num::Tensor<T>> params;
  for (const auto& p : m.registry().params()) params.push_back(p.tensor);
  AdamMoments<T> moments;
  std::vector<std::vector<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& p : params) best.emplace_back(p.values().begin(), p.values().end());
  };

  std::mt19937_64 rng(cfg.seed);
  std::vector<double> consumed(V, 0.0);
  const auto static_face = face_vector<T>(static_freq);
  std::vector<std::size_t> order(train_split.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult res;
  bool out_of_steps = false;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !out_of_steps; ++epoch) {
    if (cfg.max_steps && res.steps >= cfg.max_steps) break;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      if (cfg.max_steps && res.steps >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto face = cfg.face_mode == FaceMode::static_counts ? static_face : face_vector<T>(consumed);
      m.registry().zero_grad();
      LossRow row;
      row.step = res.steps + 1;
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = train_split[order[k]];
        auto el = example_loss(m, ex, face, cfg.lambdas);
        const auto& p = el.loss.parts;
        if (!std::isfinite(p.total))
          throw ContractError("non-finite loss at step " + std::to_string(row.step) + " on example '" + ex.id + "'");
        num::backward(el.loss.total);
        res.cm_skipped += el.cm_skipped;
        row.l_gen += p.l_gen;
        row.l_emo += p.l_emo;
        row.l_cm += p.l_cm;
        row.l_div += p.l_div;
        row.total += p.total;
        if (cfg.face_mode == FaceMode::cumulative) count_targets(ex, consumed);
      }
      const std::size_t n = end - start;
      if (n > 1) {
        const T inv = T(1) / static_cast<T>(n);
        for (auto& p : params)
          for (auto& g : p.grad_mut()) g *= inv;
        for (double* v : {&row.l_gen, &row.l_emo, &row.l_cm, &row.l_div, &row.total}) *v /= static_cast<double>(n);
      }
      ++res.steps;
      adam_step(params, moments, cfg.adam, res.steps);
      res.history.push_back(row);
      if (hooks.on_step) hooks.on_step(row);
    }

    EpochReport rep;
    rep.epoch = epoch;
    rep.steps = res.steps;
    rep.valid_ppl = eval::perplexity(m, valid);
    rep.improved = rep.valid_ppl < res.best_ppl;
    res.valid_ppl.push_back(rep.valid_ppl);
    res.epochs = epoch;
    if (rep.improved) {
      res.best_ppl = rep.valid_ppl;
      res.best_epoch = epoch;
      snapshot();
      if (hooks.on_improve) hooks.on_improve(m, rep);
    }
    if (hooks.on_epoch) hooks.on_epoch(rep);
    if (early_stop_check(res.valid_ppl, cfg.patience)) {
      res.early_stopped = true;
      break;
    }
  }

  if (!best.empty())
    for (std::size_t i = 0; i < params.size(); ++i) std::copy(best[i].begin(), best[i].end(), params[i].values().begin());
  return res;
}

} // namespace imagine::training
