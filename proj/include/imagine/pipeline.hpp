#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "imagine/cause.hpp"
#include "imagine/corpus.hpp"
#include "imagine/knowledge.hpp"
#include "imagine/model/imagine.hpp"

namespace imagine {

struct Providers {
  cause::CauseProvider cause;
  knowledge::KnowledgeStore store;
};

// A dialogue after cause extraction, knowledge acquisition and id encoding.
struct PreparedExample {
  std::string id;
  model::ModelInput input;
  std::vector<int> target;  // response ids + EOS; empty when unknown
  std::string reference;    // gold response text
  int emotion = -1;         // -1 when unlabeled
  std::array<std::optional<int>, model::kNumCm> cm;
  std::vector<int> causes;
  knowledge::EntitiesByRelation entities;
  std::size_t store_hits = 0;
  std::size_t store_misses = 0;
};

// Re-throws the current exception with the example id prefixed, keeping its type.
template <typename F>
auto with_example_context(const std::string& id, F&& f) -> decltype(f()) {
  const std::string tag = "example '" + id + "': ";
  try {
    return f();
  } catch (const SchemaError& e) {
    throw SchemaError(tag + e.what());
  } catch (const ParseError& e) {
    throw ParseError(tag + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(tag + e.what());
  } catch (const DimensionError& e) {
    throw DimensionError(tag + e.what());
  } catch (const IndexError& e) {
    throw IndexError(tag + e.what());
  } catch (const ContractError& e) {
    throw ContractError(tag + e.what());
  } catch (const IoError& e) {
    throw IoError(tag + e.what());
  }
}

inline PreparedExample prepare_example(const corpus::Dialogue& d, const corpus::Vocab& vocab,
                                       const corpus::EmotionLabels& labels, const Providers& providers,
                                       std::size_t max_positions = corpus::kMaxPositions) {
  return with_example_context(d.id, [&] {
    PreparedExample ex;
    ex.id = d.id;
    ex.causes = providers.cause.extract_causes(d);
    ex.input.context = corpus::encode_context(d, vocab, max_positions);
    ex.input.cause = corpus::encode_cause_input(d, ex.causes, vocab, max_positions);
    auto acquired = knowledge::acquire(providers.store, knowledge::make_cause_key(d, ex.causes));
    ex.entities = std::move(acquired.entities);
    ex.store_hits = acquired.store_hits;
    ex.store_misses = acquired.store_misses;
    ex.input.knowledge = knowledge::assemble_commonsense_sequences(ex.entities, vocab, max_positions);
    if (!d.target_response.empty()) ex.target = corpus::encode_target(d.target_response, vocab, max_positions - 1);
    ex.reference = d.target_response;
    if (!d.emotion_label.empty()) ex.emotion = labels.index(d.emotion_label);
    if (d.cm_labels)
      for (std::size_t i = 0; i < model::kNumCm; ++i) ex.cm[i] = (*d.cm_labels)[i];
    return ex;
  });
}

inline std::vector<PreparedExample> prepare_all(const std::vector<corpus::Dialogue>& ds, const corpus::Vocab& vocab,
                                                const corpus::EmotionLabels& labels, const Providers& providers,
                                                std::size_t max_positions = corpus::kMaxPositions) {
  std::vector<PreparedExample> out;
  out.reserve(ds.size());
  for (const auto& d : ds) out.push_back(prepare_example(d, vocab, labels, providers, max_positions));
  return out;
}

} // namespace imagine
