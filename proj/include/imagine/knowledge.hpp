#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "imagine/corpus.hpp"
#include "imagine/hash.hpp"

namespace imagine::knowledge {

inline constexpr std::size_t kEntitiesPerRelation = 5;
inline constexpr std::size_t kNumRelations = 11;
inline constexpr std::size_t kNumRelationTypes = 4;

// Taxonomy order: types in this order, relations within a type in listing order.
enum class Relation : int {
  XReact,
  XIntent, XNeed, XWant, XEffect, XAttr,
  HasProperty, CapableOf, Desires,
  Causes, XReason,
};

enum class RelationType : int { Affect, Behaviour, Physical, Events };

struct RelationInfo {
  Relation relation;
  RelationType type;
  const char* name;
};

inline constexpr std::array<RelationInfo, kNumRelations> kTaxonomy{{
    {Relation::XReact, RelationType::Affect, "XReact"},
    {Relation::XIntent, RelationType::Behaviour, "XIntent"},
    {Relation::XNeed, RelationType::Behaviour, "XNeed"},
    {Relation::XWant, RelationType::Behaviour, "XWant"},
    {Relation::XEffect, RelationType::Behaviour, "XEffect"},
    {Relation::XAttr, RelationType::Behaviour, "XAttr"},
    {Relation::HasProperty, RelationType::Physical, "HasProperty"},
    {Relation::CapableOf, RelationType::Physical, "CapableOf"},
    {Relation::Desires, RelationType::Physical, "Desires"},
    {Relation::Causes, RelationType::Events, "Causes"},
    {Relation::XReason, RelationType::Events, "XReason"},
}};

inline constexpr std::array<const char*, kNumRelationTypes> kTypeNames{"Affect", "Behaviour",
                                                                       "Physical", "Events"};

inline const RelationInfo& info(Relation r) { return kTaxonomy[static_cast<std::size_t>(r)]; }
inline RelationType type_of(Relation r) { return info(r).type; }
inline const char* name(Relation r) { return info(r).name; }

inline std::vector<Relation> relations_of(RelationType t) {
  std::vector<Relation> out;
  for (const auto& ri : kTaxonomy)
    if (ri.type == t) out.push_back(ri.relation);
  return out;
}

// Case-insensitive: "xReact" and "XReact" both resolve.
inline Relation parse_relation(const std::string& s) {
  const std::string want = corpus::to_lower(s);
  for (const auto& ri : kTaxonomy)
    if (corpus::to_lower(ri.name) == want) return ri.relation;
  throw SchemaError("unknown relation '" + s + "'");
}

using Entities = std::vector<std::string>;
using EntitiesByRelation = std::array<Entities, kNumRelations>;

// Lowercased, whitespace-collapsed concatenation of the cause utterances.
inline std::string make_cause_key(const corpus::Dialogue& d, const std::vector<int>& causes) {
  std::string joined;
  for (int i : causes) {
    if (!joined.empty()) joined.push_back(' ');
    joined += d.context.at(static_cast<std::size_t>(i)).text;
  }
  return corpus::to_lower(corpus::normalize_whitespace(joined));
}

inline const std::vector<std::string>& stub_words(Relation r) {
  static const std::array<std::vector<std::string>, kNumRelations> lists{{
      {"happy", "sad", "proud", "scared", "relieved", "excited", "nervous", "grateful"},
      {"succeed", "relax", "help", "learn", "celebrate", "rest", "connect", "belong"},
      {"money", "time", "support", "practice", "courage", "patience", "friends", "information"},
      {"share", "travel", "talk", "apologize", "improve", "sleep", "visit", "plan"},
      {"smiles", "cries", "sleeps", "laughs", "worries", "hugs", "shouts", "sighs"},
      {"kind", "brave", "lucky", "careful", "anxious", "generous", "lonely", "determined"},
      {"big", "loud", "warm", "expensive", "fragile", "new", "old", "bright"},
      {"hurt", "heal", "surprise", "break", "grow", "assist", "change", "comfort"},
      {"attention", "safety", "love", "food", "quiet", "freedom", "warmth", "respect"},
      {"stress", "joy", "tears", "fear", "relief", "anger", "pain", "laughter"},
      {"luck", "effort", "accident", "habit", "family", "work", "weather", "health"},
  }};
  return lists[static_cast<std::size_t>(r)];
}

// Deterministic stand-in for a generative commonsense model: five words
// from the relation's list starting at FNV-1a(cause_key) mod list length.
inline Entities stub_generate(const std::string& cause_key, Relation r) {
  const auto& words = stub_words(r);
  const std::uint64_t len = words.size();
  const std::uint64_t start = fnv1a(cause_key) % len;
  Entities out;
  for (std::uint64_t i = 0; i < kEntitiesPerRelation; ++i) out.push_back(words[(start + i) % len]);
  return out;
}

struct FetchResult {
  Entities entities;
  bool from_store = false;
};

// Precomputed entity inferences keyed by (cause_key, relation).
class KnowledgeStore {
public:
  void put(const std::string& cause_key, Relation r, Entities entities) {
    if (entities.size() != kEntitiesPerRelation)
      throw SchemaError("knowledge entry for relation " + std::string(name(r)) + " has " +
                        std::to_string(entities.size()) + " entities, expected 5");
    entries_[{normalize_key(cause_key), r}] = std::move(entities);
  }

  std::size_t size() const { return entries_.size(); }

  // JSONL: {"cause_key": str, "relation": str, "entities": [str x 5]}
  static KnowledgeStore load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    KnowledgeStore store;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), line);
      }
      for (const char* f : {"cause_key", "relation", "entities"})
        if (!j.contains(f)) throw SchemaError(std::string("missing required field \"") + f + "\"", line);
      if (!j["cause_key"].is_string() || !j["relation"].is_string() || !j["entities"].is_array())
        throw SchemaError("knowledge record has mistyped fields", line);
      Entities ents;
      for (const auto& e : j["entities"]) {
        if (!e.is_string() || corpus::tokenize(e.get<std::string>()).empty())
          throw SchemaError("entities must be non-empty strings", line);
        ents.push_back(e.get<std::string>());
      }
      try {
        store.put(j["cause_key"].get<std::string>(), parse_relation(j["relation"].get<std::string>()),
                  std::move(ents));
      } catch (const SchemaError& e) {
        throw SchemaError(e.what(), line);
      }
    }
    return store;
  }

  // Stored entities when present, stub output otherwise.
  FetchResult fetch_entities(const std::string& cause_key, Relation r) const {
    auto it = entries_.find({normalize_key(cause_key), r});
    if (it != entries_.end()) return {it->second, true};
    return {stub_generate(normalize_key(cause_key), r), false};
  }

private:
  static std::string normalize_key(const std::string& k) {
    return corpus::to_lower(corpus::normalize_whitespace(k));
  }

  std::map<std::pair<std::string, Relation>, Entities> entries_;
};

struct Acquired {
  EntitiesByRelation entities;
  std::size_t store_hits = 0;
  std::size_t store_misses = 0;
};

inline Acquired acquire(const KnowledgeStore& store, const std::string& cause_key) {
  Acquired a;
  for (const auto& ri : kTaxonomy) {
    auto r = store.fetch_entities(cause_key, ri.relation);
    (r.from_store ? a.store_hits : a.store_misses)++;
    a.entities[static_cast<std::size_t>(ri.relation)] = std::move(r.entities);
  }
  return a;
}

// Affect, Behaviour, Physical, Events.
using KnowledgeBundle = std::array<corpus::TokenSequence, kNumRelationTypes>;

// Per relation type, entity tokens in taxonomy order. Behaviour, Physical
// and Events lead with CLS; Affect does not. All tokens sit in state 0.
inline KnowledgeBundle assemble_commonsense_sequences(const EntitiesByRelation& entities,
                                                      const corpus::Vocab& vocab,
                                                      std::size_t max_len = corpus::kMaxPositions) {
  KnowledgeBundle bundle;
  for (std::size_t t = 0; t < kNumRelationTypes; ++t) {
    const auto type = static_cast<RelationType>(t);
    const bool cls = type != RelationType::Affect;
    std::vector<int> words;
    for (Relation r : relations_of(type)) {
      const auto& ents = entities[static_cast<std::size_t>(r)];
      if (ents.size() != kEntitiesPerRelation)
        throw ContractError("assemble_commonsense_sequences: relation " + std::string(name(r)) +
                            " has " + std::to_string(ents.size()) + " entities, expected 5");
      for (const auto& e : ents)
        for (int id : vocab.encode(corpus::tokenize(e))) words.push_back(id);
    }
    const std::size_t budget = max_len - (cls ? 1 : 0);
    if (words.size() > budget) words.resize(budget);
    auto& seq = bundle[t];
    if (cls) seq.word_ids.push_back(corpus::kCls);
    seq.word_ids.insert(seq.word_ids.end(), words.begin(), words.end());
    seq.state_ids.assign(seq.word_ids.size(), 0);
    seq.position_ids.resize(seq.word_ids.size());
    for (std::size_t i = 0; i < seq.size(); ++i) seq.position_ids[i] = static_cast<int>(i);
  }
  return bundle;
}

} // namespace imagine::knowledge
