#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "imagine/corpus.hpp"

namespace imagine::cause {

enum class Mode { oracle, heuristic };

inline Mode parse_mode(const std::string& s) {
  if (s == "oracle") return Mode::oracle;
  if (s == "heuristic") return Mode::heuristic;
  throw ConfigError("unknown cause mode '" + s + "' (expected oracle or heuristic)");
}

inline const char* mode_name(Mode m) { return m == Mode::oracle ? "oracle" : "heuristic"; }

// Marks the context utterances that carry the emotion cause. Oracle mode
// trusts annotations; heuristic mode scans speaker turns for trigger words.
class CauseProvider {
public:
  static CauseProvider oracle() { return CauseProvider(Mode::oracle, {}); }

  static CauseProvider heuristic(std::unordered_set<std::string> lexicon) {
    if (lexicon.empty()) throw ConfigError("heuristic cause provider needs a non-empty lexicon");
    return CauseProvider(Mode::heuristic, std::move(lexicon));
  }

  // Lexicon file: one lowercase token per line.
  static std::unordered_set<std::string> load_lexicon(const std::string& path) {
    std::unordered_set<std::string> lex;
    for (auto& line : corpus::read_lines(path)) lex.insert(corpus::to_lower(line));
    return lex;
  }

  Mode mode() const { return mode_; }
  const std::unordered_set<std::string>& lexicon() const { return lexicon_; }

  std::vector<int> extract_causes(const corpus::Dialogue& d) const {
    if (d.context.empty()) throw ContractError("extract_causes: dialogue '" + d.id + "' has no context");
    if (mode_ == Mode::oracle) {
      if (!d.cause_indices || d.cause_indices->empty())
        throw ConfigError("dialogue '" + d.id +
                          "' has no cause annotations; use the heuristic cause mode instead");
      return *d.cause_indices;
    }
    std::vector<int> hits;
    int last_speaker = -1;
    for (std::size_t i = 0; i < d.context.size(); ++i) {
      const auto& u = d.context[i];
      if (u.role != corpus::Role::speaker) continue;
      last_speaker = static_cast<int>(i);
      for (const auto& tok : corpus::tokenize(u.text)) {
        if (lexicon_.count(tok)) {
          hits.push_back(static_cast<int>(i));
          break;
        }
      }
    }
    if (!hits.empty()) return hits;
    if (last_speaker >= 0) return {last_speaker};
    return {static_cast<int>(d.context.size()) - 1};
  }

private:
  CauseProvider(Mode m, std::unordered_set<std::string> lex) : mode_(m), lexicon_(std::move(lex)) {}

  Mode mode_;
  std::unordered_set<std::string> lexicon_;
};

} // namespace imagine::cause
