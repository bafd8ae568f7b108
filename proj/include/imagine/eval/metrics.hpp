#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "imagine/errors.hpp"

namespace imagine::eval {

using Sentence = std::vector<std::string>;

namespace detail {

inline std::map<Sentence, std::size_t> ngram_counts(const Sentence& s, std::size_t n) {
  std::map<Sentence, std::size_t> counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Sentence(s.begin() + i, s.begin() + i + n)];
  return counts;
}

} // namespace detail

struct BleuStats {
  std::size_t matches[2] = {0, 0};
  std::size_t totals[2] = {0, 0};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

inline BleuStats bleu2_stats(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references) {
  if (candidates.size() != references.size())
    throw ContractError("bleu2: " + std::to_string(candidates.size()) + " candidates vs " +
                        std::to_string(references.size()) + " references");
  BleuStats st;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    st.candidate_length += candidates[k].size();
    st.reference_length += references[k].size();
    for (std::size_t n = 1; n <= 2; ++n) {
      auto cand = detail::ngram_counts(candidates[k], n);
      auto ref = detail::ngram_counts(references[k], n);
      for (const auto& [gram, c] : cand) {
        st.totals[n - 1] += c;
        auto it = ref.find(gram);
        if (it != ref.end()) st.matches[n - 1] += std::min(c, it->second);
      }
    }
  }
  return st;
}

// Corpus-level BLEU over clipped unigram and bigram precision, uniform
// weights, no smoothing, brevity penalty exp(1 − r/c) when c < r.
inline double bleu2(const std::vector<Sentence>& candidates, const std::vector<Sentence>& references) {
  if (candidates.empty()) throw ContractError("bleu2: empty candidate set");
  const auto st = bleu2_stats(candidates, references);
  if (st.matches[0] == 0 || st.matches[1] == 0) return 0.0;
  const double p1 = static_cast<double>(st.matches[0]) / static_cast<double>(st.totals[0]);
  const double p2 = static_cast<double>(st.matches[1]) / static_cast<double>(st.totals[1]);
  const double c = static_cast<double>(st.candidate_length), r = static_cast<double>(st.reference_length);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(0.5 * (std::log(p1) + std::log(p2)));
}

// Unique n-grams over total n-grams across all responses; n-grams never
// span two responses.
inline double distinct_n(const std::vector<Sentence>& responses, std::size_t n) {
  if (n != 1 && n != 2) throw ContractError("distinct_n: n must be 1 or 2");
  std::set<Sentence> unique;
  std::size_t total = 0;
  for (const auto& r : responses)
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
      unique.emplace(r.begin() + i, r.begin() + i + n);
      ++total;
    }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

inline double emotion_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw ContractError("emotion_accuracy: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predictions[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

} // namespace imagine::eval
