#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <vector>

#include "imagine/model/imagine.hpp"
#include "imagine/numerics/ops.hpp"

namespace imagine::training {

using num::Tensor;

// Frequency-aware token weights. FQ = freq / Σ freq, raw = 1 − FQ / max FQ
// so the most frequent token gets 0, then rescaled to mean 1. Degenerate
// inputs (no counts, or every raw weight 0) give uniform weights of 1.
inline std::vector<double> face_weights(const std::vector<double>& freq) {
  const std::size_t V = freq.size();
  std::vector<double> w(V, 1.0);
  double total = 0;
  for (double f : freq) {
    if (f < 0) throw ContractError("face_weights: negative frequency");
    total += f;
  }
  if (V == 0 || total <= 0) return w;
  double max_fq = 0;
  std::vector<double> fq(V);
  for (std::size_t i = 0; i < V; ++i) {
    fq[i] = freq[i] / total;
    max_fq = std::max(max_fq, fq[i]);
  }
  // 1 − FQ/max FQ equals slope·FQ + 1 with slope −1/max FQ, but is exactly 0
  // for the most frequent token.
  double raw_sum = 0;
  for (std::size_t i = 0; i < V; ++i) {
    w[i] = 1.0 - fq[i] / max_fq;
    raw_sum += w[i];
  }
  if (raw_sum <= 0) return std::vector<double>(V, 1.0);
  for (auto& x : w) x = x * static_cast<double>(V) / raw_sum;
  return w;
}

// Raw (pre-normalization) weights, exposed for inspection.
inline std::vector<double> face_raw_weights(const std::vector<double>& freq) {
  double total = 0;
  for (double f : freq) total += f;
  std::vector<double> w(freq.size(), 1.0);
  if (total <= 0) return w;
  double max_fq = 0;
  for (double f : freq) max_fq = std::max(max_fq, f / total);
  for (std::size_t i = 0; i < freq.size(); ++i) w[i] = 1.0 - (freq[i] / total) / max_fq;
  return w;
}

// Summed token NLL under teacher forcing.
template <typename T>
Tensor<T> generation_loss(const Tensor<T>& logits, const std::vector<int>& targets) {
  return num::sequence_nll(logits, targets);
}

// NLL of each gold token scaled by that token's frequency weight.
template <typename T>
Tensor<T> diversity_loss(const Tensor<T>& logits, const std::vector<int>& targets,
                         const std::vector<T>& weights) {
  if (weights.size() != logits.cols())
    throw DimensionError("diversity_loss: weight vector size " + std::to_string(weights.size()) +
                         " vs vocabulary " + std::to_string(logits.cols()));
  return num::sequence_nll(logits, targets, weights);
}

template <typename T>
struct CmLoss {
  Tensor<T> loss;
  std::size_t skipped_heads = 0;
};

// Σ over labeled heads of the 2-way cross entropy; unlabeled heads add nothing.
template <typename T>
CmLoss<T> cm_loss(const std::array<Tensor<T>, model::kNumCm>& logits,
                  const std::array<std::optional<int>, model::kNumCm>& labels) {
  CmLoss<T> out;
  std::vector<Tensor<T>> terms;
  for (std::size_t i = 0; i < model::kNumCm; ++i) {
    if (!labels[i]) {
      ++out.skipped_heads;
      continue;
    }
    if (*labels[i] != 0 && *labels[i] != 1)
      throw ContractError("cm_loss: label for " + std::string(model::kCmNames[i]) + " must be 0 or 1");
    terms.push_back(num::cross_entropy_from_logits(logits[i], *labels[i]));
  }
  out.loss = terms.empty() ? Tensor<T>::scalar(T(0)) : num::weighted_sum(terms, std::vector<T>(terms.size(), T(1)));
  return out;
}

struct Lambdas {
  double gen = 1.0, emo = 1.0, cm = 1.0, div = 1.5;
};

struct LossBreakdown {
  double l_gen = 0, l_emo = 0, l_cm = 0, l_div = 0, total = 0;
  Lambdas lambdas;
};

template <typename T>
struct TotalLoss {
  Tensor<T> total;
  LossBreakdown parts;
};

// λ1·gen + λ2·emo + λ3·cm + λ4·div, accumulated in that order.
template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& gen, const Tensor<T>& emo, const Tensor<T>& cm,
                        const Tensor<T>& div, const Lambdas& l = {}) {
  TotalLoss<T> out;
  out.total = num::weighted_sum<T>({gen, emo, cm, div},
                                   {static_cast<T>(l.gen), static_cast<T>(l.emo), static_cast<T>(l.cm),
                                    static_cast<T>(l.div)});
  out.parts = {static_cast<double>(gen.item()), static_cast<double>(emo.item()), static_cast<double>(cm.item()),
               static_cast<double>(div.item()), static_cast<double>(out.total.item()), l};
  return out;
}

} // namespace imagine::training
