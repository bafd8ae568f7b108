#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "imagine/errors.hpp"
#include "imagine/hash.hpp"

namespace imagine::corpus {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kBos = 2;
inline constexpr int kEos = 3;
inline constexpr int kCls = 4;
inline constexpr int kNumSpecials = 5;
inline constexpr std::size_t kMaxPositions = 1024;

inline const std::array<std::string, kNumSpecials>& special_tokens() {
  static const std::array<std::string, kNumSpecials> s{"<pad>", "<unk>", "<bos>", "<eos>", "<cls>"};
  return s;
}

enum class Role : int { speaker = 0, listener = 1 };

struct Utterance {
  Role role = Role::speaker;
  std::string text;
};

// Order: er, ip, ex. 1 = yes.
using CmLabels = std::array<int, 3>;

struct Dialogue {
  std::string id;
  std::vector<Utterance> context;
  std::string target_response;
  std::string emotion_label;  // empty when unlabeled
  std::optional<std::vector<int>> cause_indices;
  std::optional<CmLabels> cm_labels;
};

// The 32 EmpatheticDialogues emotion classes.
inline const std::vector<std::string>& default_emotion_labels() {
  static const std::vector<std::string> labels{
      "afraid",      "angry",       "annoyed",     "anticipating", "anxious",   "apprehensive",
      "ashamed",     "caring",      "confident",   "content",      "devastated", "disappointed",
      "disgusted",   "embarrassed", "excited",     "faithful",     "furious",   "grateful",
      "guilty",      "hopeful",     "impressed",   "jealous",      "joyful",    "lonely",
      "nostalgic",   "prepared",    "proud",       "sad",          "sentimental", "surprised",
      "terrified",   "trusting"};
  return labels;
}

class EmotionLabels {
public:
  EmotionLabels() : EmotionLabels(default_emotion_labels()) {}
  explicit EmotionLabels(std::vector<std::string> names) : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty()) throw ConfigError("emotion label set contains an empty name");
      if (!index_.emplace(names_[i], static_cast<int>(i)).second)
        throw ConfigError("duplicate emotion label '" + names_[i] + "'");
    }
    if (names_.empty()) throw ConfigError("emotion label set is empty");
  }

  std::size_t size() const { return names_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  int index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw SchemaError("unknown emotion label '" + name + "'");
    return it->second;
  }
  const std::string& name(int i) const { return names_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& names() const { return names_; }

private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
      line.pop_back();
    std::size_t b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(line.substr(b));
  }
  return out;
}

inline EmotionLabels load_labels(const std::string& path) { return EmotionLabels(read_lines(path)); }

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Runs of whitespace collapsed to one space, trimmed.
inline std::string normalize_whitespace(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
    } else {
      if (pending) out.push_back(' ');
      pending = false;
      out.push_back(c);
    }
  }
  return out;
}

inline bool is_edge_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':' || c == '\'' ||
         c == '"';
}

// Lowercase, split on whitespace, peel leading and trailing punctuation off
// into single-character tokens.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string_view word = text.substr(i, j - i);
    std::size_t b = 0, e = word.size();
    while (b < e && is_edge_punct(word[b])) out.emplace_back(1, word[b++]);
    std::vector<std::string> tail;
    while (e > b && is_edge_punct(word[e - 1])) tail.emplace_back(1, word[--e]);
    if (e > b) out.push_back(to_lower(word.substr(b, e - b)));
    out.insert(out.end(), tail.rbegin(), tail.rend());
    i = j;
  }
  return out;
}

class Vocab {
public:
  Vocab() {
    for (const auto& s : special_tokens()) add(s);
  }

  // Builds from the non-special tokens, in order.
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const auto& t : tokens) {
      if (v.index_.count(t)) throw SchemaError("duplicate vocabulary token '" + t + "'");
      v.add(t);
    }
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }

  // FNV-1a over every token including specials, newline-terminated.
  std::string hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& t : tokens_) {
      h = fnv1a(t, h);
      h = fnv1a("\n", h);
    }
    return hex64(h);
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
  }

  static Vocab load(const std::string& path) { return from_tokens(read_lines(path)); }

private:
  void add(const std::string& t) {
    index_.emplace(t, static_cast<int>(tokens_.size()));
    tokens_.push_back(t);
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct LoadOptions {
  bool require_response = true;
  bool require_emotion = true;
};

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& obj, const char* name, std::size_t line) {
  auto it = obj.find(name);
  if (it == obj.end()) throw SchemaError(std::string("missing required field \"") + name + "\"", line);
  return *it;
}

inline std::string string_field(const nlohmann::json& obj, const char* name, std::size_t line) {
  const auto& f = field(obj, name, line);
  if (!f.is_string()) throw SchemaError(std::string("field \"") + name + "\" must be a string", line);
  return f.get<std::string>();
}

} // namespace detail

// One JSON object per line. Blank lines are skipped.
inline Dialogue parse_dialogue(const std::string& text, const EmotionLabels& labels,
                               std::size_t line, const LoadOptions& opts = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw ParseError("expected a JSON object", line);

  Dialogue d;
  d.id = detail::string_field(j, "id", line);
  const auto& ctx = detail::field(j, "context", line);
  if (!ctx.is_array() || ctx.empty()) throw SchemaError("\"context\" must be a non-empty array", line);
  for (const auto& u : ctx) {
    if (!u.is_object()) throw SchemaError("context entries must be objects", line);
    const auto& sp = detail::field(u, "speaker", line);
    if (!sp.is_number_integer() || (sp.get<int>() != 0 && sp.get<int>() != 1))
      throw SchemaError("\"speaker\" must be 0 or 1", line);
    std::string text = normalize_whitespace(detail::string_field(u, "text", line));
    if (text.empty()) throw SchemaError("utterance text is empty", line);
    d.context.push_back({static_cast<Role>(sp.get<int>()), std::move(text)});
  }

  if (j.contains("response") || opts.require_response) {
    d.target_response = normalize_whitespace(detail::string_field(j, "response", line));
    if (opts.require_response && d.target_response.empty())
      throw SchemaError("\"response\" is empty", line);
  }
  if (j.contains("emotion") || opts.require_emotion) {
    d.emotion_label = detail::string_field(j, "emotion", line);
    if (!labels.contains(d.emotion_label))
      throw SchemaError("unknown emotion label '" + d.emotion_label + "'", line);
  }

  if (auto it = j.find("cause_indices"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError("\"cause_indices\" must be an array", line);
    std::vector<int> idx;
    for (const auto& v : *it) {
      if (!v.is_number_integer()) throw SchemaError("cause index must be an integer", line);
      const int i = v.get<int>();
      if (i < 0 || static_cast<std::size_t>(i) >= d.context.size())
        throw SchemaError("cause index " + std::to_string(i) + " outside context", line);
      if (!idx.empty() && i <= idx.back())
        throw SchemaError("cause indices must be strictly increasing", line);
      idx.push_back(i);
    }
    if (!idx.empty()) d.cause_indices = std::move(idx);
  }

  if (auto it = j.find("cm"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw SchemaError("\"cm\" must be an object", line);
    CmLabels cm{};
    const char* keys[3] = {"er", "ip", "ex"};
    for (int k = 0; k < 3; ++k) {
      const auto& v = detail::field(*it, keys[k], line);
      if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1))
        throw SchemaError(std::string("cm.") + keys[k] + " must be 0 or 1", line);
      cm[static_cast<std::size_t>(k)] = v.get<int>();
    }
    d.cm_labels = cm;
  }
  return d;
}

inline std::vector<Dialogue> load_dialogues(const std::string& path, const EmotionLabels& labels,
                                            const LoadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Dialogue> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_dialogue(text, labels, line, opts));
  }
  return out;
}

// Tokens with corpus frequency ≥ min_freq, in first-appearance order.
// Counts context utterances and target responses.
inline Vocab build_vocab(const std::vector<Dialogue>& dialogues, int min_freq) {
  if (min_freq < 1) throw ContractError("build_vocab: min_freq must be >= 1");
  std::vector<std::string> order;
  std::unordered_map<std::string, int> counts;
  auto count = [&](const std::string& text) {
    for (auto& t : tokenize(text)) {
      auto [it, fresh] = counts.emplace(t, 0);
      if (fresh) order.push_back(t);
      ++it->second;
    }
  };
  for (const auto& d : dialogues) {
    for (const auto& u : d.context) count(u.text);
    count(d.target_response);
  }
  std::vector<std::string> kept;
  for (const auto& t : order) {
    const bool special = std::find(special_tokens().begin(), special_tokens().end(), t) !=
                         special_tokens().end();
    if (!special && counts[t] >= min_freq) kept.push_back(t);
  }
  return Vocab::from_tokens(kept);
}

// Parallel id lists fed to the embedding tables.
struct TokenSequence {
  std::vector<int> word_ids;
  std::vector<int> position_ids;
  std::vector<int> state_ids;

  std::size_t size() const { return word_ids.size(); }
  bool empty() const { return word_ids.empty(); }
};

using CauseInput = TokenSequence;

// Concatenates the given utterances. With `cls`, a CLS token in state 0
// leads the sequence. Over-long input keeps the most recent tokens.
inline TokenSequence encode_utterances(const std::vector<const Utterance*>& utts, const Vocab& vocab,
                                       bool cls, std::size_t max_len = kMaxPositions) {
  std::vector<int> words, states;
  for (const Utterance* u : utts) {
    for (int id : vocab.encode(tokenize(u->text))) {
      words.push_back(id);
      states.push_back(static_cast<int>(u->role));
    }
  }
  const std::size_t budget = max_len - (cls ? 1 : 0);
  if (words.size() > budget) {
    const auto drop = static_cast<std::ptrdiff_t>(words.size() - budget);
    words.erase(words.begin(), words.begin() + drop);
    states.erase(states.begin(), states.begin() + drop);
  }
  TokenSequence seq;
  if (cls) {
    seq.word_ids.push_back(kCls);
    seq.state_ids.push_back(0);
  }
  seq.word_ids.insert(seq.word_ids.end(), words.begin(), words.end());
  seq.state_ids.insert(seq.state_ids.end(), states.begin(), states.end());
  seq.position_ids.resize(seq.word_ids.size());
  for (std::size_t i = 0; i < seq.position_ids.size(); ++i) seq.position_ids[i] = static_cast<int>(i);
  return seq;
}

inline CauseInput encode_cause_input(const Dialogue& d, const std::vector<int>& causes,
                                     const Vocab& vocab, std::size_t max_len = kMaxPositions) {
  if (causes.empty())
    throw ContractError("encode_cause_input: no cause utterances for dialogue '" + d.id +
                        "'; run a cause provider first");
  std::vector<const Utterance*> utts;
  for (int i : causes) {
    if (i < 0 || static_cast<std::size_t>(i) >= d.context.size())
      throw ContractError("encode_cause_input: cause index " + std::to_string(i) +
                          " outside context of '" + d.id + "'");
    utts.push_back(&d.context[static_cast<std::size_t>(i)]);
  }
  return encode_utterances(utts, vocab, true, max_len);
}

// Whole context, CLS-prefixed, for emotion perception.
inline TokenSequence encode_context(const Dialogue& d, const Vocab& vocab,
                                    std::size_t max_len = kMaxPositions) {
  std::vector<int> all(d.context.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return encode_cause_input(d, all, vocab, max_len);
}

// Counts of each vocabulary id over the target responses.
inline std::vector<double> token_frequencies(const std::vector<Dialogue>& dialogues, const Vocab& vocab) {
  std::vector<double> freq(vocab.size(), 0.0);
  for (const auto& d : dialogues)
    for (int id : vocab.encode(tokenize(d.target_response))) freq[static_cast<std::size_t>(id)] += 1.0;
  return freq;
}

// freq / Σ freq; all zeros when the total is zero.
inline std::vector<double> normalize_frequencies(const std::vector<double>& freq) {
  double total = 0;
  for (double f : freq) total += f;
  std::vector<double> fq(freq.size(), 0.0);
  if (total > 0)
    for (std::size_t i = 0; i < freq.size(); ++i) fq[i] = freq[i] / total;
  return fq;
}

// Response token ids followed by EOS, capped so the decoder prefix fits.
inline std::vector<int> encode_target(const std::string& response, const Vocab& vocab,
                                      std::size_t max_len = kMaxPositions - 1) {
  auto ids = vocab.encode(tokenize(response));
  if (ids.size() + 1 > max_len) ids.resize(max_len - 1);
  ids.push_back(kEos);
  return ids;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

} // namespace imagine::corpus
