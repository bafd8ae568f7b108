#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "imagine/corpus.hpp"
#include "imagine/knowledge.hpp"
#include "imagine/model/config.hpp"
#include "imagine/model/layers.hpp"

namespace imagine::model {

inline constexpr std::size_t kNumCm = 3;  // er, ip, ex
inline constexpr std::array<const char*, kNumCm> kCmNames{"er", "ip", "ex"};

// Everything the network reads for one example.
struct ModelInput {
  corpus::TokenSequence context;
  corpus::CauseInput cause;
  knowledge::KnowledgeBundle knowledge;
};

template <typename T>
struct CmOutput {
  Tensor<T> signal;                            // ê_cm [d]
  std::array<Tensor<T>, kNumCm> logits;          // [2], order [no, yes]
  std::array<Tensor<T>, kNumCm> representations; // [d]
  std::array<Tensor<T>, kNumCm> yes_prob;        // scalar
};

template <typename T>
struct Encoded {
  Tensor<T> context_states;  // H_S [Ls×d]
  Tensor<T> emotion_logits;  // [E]
  Tensor<T> cause_states;    // H_C [L×d]
  Tensor<T> cause_cls;       // h_c [d]
  CmOutput<T> cm;
  std::array<Tensor<T>, knowledge::kNumRelationTypes> knowledge_pooled;  // [d] each
  std::array<Tensor<T>, knowledge::kNumRelationTypes> refined;           // [L×d] each
  Tensor<T> fused;  // Ĥ_C [L×4d]

  int predicted_emotion() const {
    auto v = emotion_logits.values();
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  }
};

template <typename T>
struct DecodeOutput {
  Tensor<T> logits;  // one row per prefix row, [rows×V]
  std::vector<Tensor<T>> cross_weights;  // last decoder layer, per head
};

// The full network: context, cause and knowledge encoders, emotion and CM
// heads, knowledge refinement with gated fusion, and a decoder whose
// cross-attention reads the fused cause representation.
template <typename T>
class ImagineModel {
public:
  explicit ImagineModel(const ModelConfig& cfg) : cfg_(cfg), reg_(cfg.init_seed) {
    cfg_.validate();
    const std::size_t d = cfg_.d, V = cfg_.vocab_size, E = cfg_.num_emotions;
    const double eps = cfg_.layer_norm_eps;
    word_emb_ = reg_.uniform("embed.word", {V, d}, 0.1);
    pos_emb_ = reg_.uniform("embed.position", {cfg_.max_positions, d}, 0.1);
    state_emb_ = reg_.uniform("embed.state", {2, d}, 0.1);
    context_enc_ = Encoder<T>(reg_, "context_encoder", cfg_.encoder_layers, d, cfg_.heads, cfg_.ffn_dim, eps);
    cause_enc_ = Encoder<T>(reg_, "cause_encoder", cfg_.encoder_layers, d, cfg_.heads, cfg_.ffn_dim, eps);
    knowledge_enc_ = Encoder<T>(reg_, "knowledge_encoder", cfg_.encoder_layers, d, cfg_.heads, cfg_.ffn_dim, eps);
    refine_in_ = Linear<T>(reg_, "refine.input", 2 * d, d);
    refine_enc_ = Encoder<T>(reg_, "refine_encoder", cfg_.encoder_layers, d, cfg_.heads, cfg_.ffn_dim, eps);
    emotion_head_ = Linear<T>(reg_, "emotion_head", d, E);
    emo_to_model_ = reg_.xavier("emotion_to_model.w", E, d);
    for (std::size_t i = 0; i < kNumCm; ++i) {
      cm_repr_[i] = Linear<T>(reg_, std::string("cm.") + kCmNames[i] + ".repr", d, d);
      cm_cls_[i] = Linear<T>(reg_, std::string("cm.") + kCmNames[i] + ".cls", d, 2);
    }
    gate_hidden_ = Linear<T>(reg_, "gate_mlp.hidden", 2 * d, d);
    gate_out_ = Linear<T>(reg_, "gate_mlp.out", d, d);
    for (std::size_t i = 0; i < cfg_.decoder_layers; ++i)
      decoder_.emplace_back(reg_, "decoder." + std::to_string(i), d, 4 * d, cfg_.heads, cfg_.ffn_dim, eps);
    if (!cfg_.tie_output) out_w_ = reg_.xavier("output.w", d, V);
    out_b_ = reg_.constant("output.b", {V}, T(0));
  }

  ImagineModel(const ImagineModel&) = delete;
  ImagineModel& operator=(const ImagineModel&) = delete;
  ImagineModel(ImagineModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry<T>& registry() { return reg_; }
  const ParamRegistry<T>& registry() const { return reg_; }

  Tensor<T> param(const std::string& name) const {
    for (const auto& p : reg_.params())
      if (p.name == name) return p.tensor;
    throw ContractError("no parameter named '" + name + "'");
  }

  // E_W[w] + E_P[p] + E_S[s] per token.
  Tensor<T> embed_sequence(const corpus::TokenSequence& ids) const {
    if (ids.word_ids.size() != ids.position_ids.size() || ids.word_ids.size() != ids.state_ids.size())
      throw ContractError("embed_sequence: id lists differ in length");
    for (int p : ids.position_ids)
      if (p < 0 || static_cast<std::size_t>(p) >= cfg_.max_positions)
        throw IndexError("embed_sequence: position " + std::to_string(p) + " outside table of " +
                         std::to_string(cfg_.max_positions) + " rows; truncate the input first");
    return num::add(num::add(num::embedding_lookup(word_emb_, ids.word_ids),
                             num::embedding_lookup(pos_emb_, ids.position_ids)),
                    num::embedding_lookup(state_emb_, ids.state_ids));
  }

  struct ContextOutput {
    Tensor<T> states;
    Tensor<T> emotion_logits;
  };

  ContextOutput encode_context(const corpus::TokenSequence& ctx) const {
    if (ctx.empty()) throw ContractError("encode_context: empty context");
    auto hs = context_enc_(embed_sequence(ctx));
    auto logits = emotion_head_.apply_vec(num::reduce(num::Reduce::first_row, hs));
    return {hs, logits};
  }

  struct CauseOutput {
    Tensor<T> states;
    Tensor<T> cls;
  };

  CauseOutput encode_cause(const corpus::CauseInput& cause) const {
    if (cause.empty()) throw ContractError("encode_cause: empty cause input");
    auto hc = cause_enc_(embed_sequence(cause));
    return {hc, num::reduce(num::Reduce::first_row, hc)};
  }

  // Σ yes_prob[i] · representation[i]
  static Tensor<T> combine_cm(const std::array<Tensor<T>, kNumCm>& reps,
                              const std::array<Tensor<T>, kNumCm>& yes) {
    auto acc = num::scale_by(reps[0], yes[0]);
    for (std::size_t i = 1; i < kNumCm; ++i) acc = num::add(acc, num::scale_by(reps[i], yes[i]));
    return acc;
  }

  CmOutput<T> cm_signal(const Tensor<T>& h_c) const {
    CmOutput<T> out;
    for (std::size_t i = 0; i < kNumCm; ++i) {
      out.representations[i] = cm_repr_[i].apply_vec(h_c);
      out.logits[i] = cm_cls_[i].apply_vec(h_c);
      out.yes_prob[i] = num::pick(num::softmax_rows(out.logits[i]), 1);
    }
    out.signal = combine_cm(out.representations, out.yes_prob);
    return out;
  }

  // One shared knowledge encoder; CLS pooling for Behaviour, Physical and
  // Events, mean pooling for Affect.
  std::array<Tensor<T>, knowledge::kNumRelationTypes> encode_and_pool_knowledge(
      const knowledge::KnowledgeBundle& bundle) const {
    std::array<Tensor<T>, knowledge::kNumRelationTypes> pooled;
    for (std::size_t t = 0; t < knowledge::kNumRelationTypes; ++t) {
      if (bundle[t].empty())
        throw ContractError(std::string("encode_and_pool_knowledge: empty ") +
                            knowledge::kTypeNames[t] + " sequence");
      auto h = knowledge_enc_(embed_sequence(bundle[t]));
      const auto kind = static_cast<knowledge::RelationType>(t) == knowledge::RelationType::Affect
                            ? num::Reduce::mean_rows
                            : num::Reduce::first_row;
      pooled[t] = num::reduce(kind, h);
    }
    return pooled;
  }

  // Token-level concatenation of the pooled knowledge onto every cause row,
  // projected back to d and re-encoded.
  Tensor<T> refine_with_knowledge(const Tensor<T>& cause_states, const Tensor<T>& pooled) const {
    if (cause_states.rank() != 2 || cause_states.cols() != cfg_.d || pooled.size() != cfg_.d)
      throw DimensionError("refine_with_knowledge: expected [Lx" + std::to_string(cfg_.d) +
                           "] and [" + std::to_string(cfg_.d) + "], got " +
                           num::shape_str(cause_states.shape()) + " and " +
                           num::shape_str(pooled.shape()));
    auto u = num::concat_last(cause_states, pooled);
    return refine_enc_(refine_in_(u));
  }

  // sigmoid(H̃) ⊙ H̃ through the gate MLP.
  Tensor<T> gate(const Tensor<T>& tilde) const {
    return gate_out_(num::relu(gate_hidden_(num::mul(num::sigmoid(tilde), tilde))));
  }

  // [Ĥ_Behav ⊕ Ĥ_Phys ⊕ Ĥ_Events ⊕ ê_cm], L×4d.
  Tensor<T> gate_and_fuse(const std::array<Tensor<T>, knowledge::kNumRelationTypes>& refined,
                          const Tensor<T>& cm_signal) const {
    const auto& affect = refined[static_cast<std::size_t>(knowledge::RelationType::Affect)];
    for (const auto& r : refined)
      if (r.rank() != 2 || r.shape() != affect.shape() || r.cols() != cfg_.d)
        throw DimensionError("gate_and_fuse: refined representations must share shape [Lx" +
                             std::to_string(cfg_.d) + "]");
    if (cm_signal.size() != cfg_.d)
      throw DimensionError("gate_and_fuse: CM signal must have " + std::to_string(cfg_.d) + " values");
    std::vector<Tensor<T>> parts;
    for (auto t : {knowledge::RelationType::Behaviour, knowledge::RelationType::Physical,
                   knowledge::RelationType::Events})
      parts.push_back(gate(num::concat_last(refined[static_cast<std::size_t>(t)], affect)));
    parts.push_back(cm_signal);
    return num::concat_last(parts);
  }

  Encoded<T> encode(const ModelInput& in) const {
    Encoded<T> e;
    auto ctx = encode_context(in.context);
    e.context_states = ctx.states;
    e.emotion_logits = ctx.emotion_logits;
    auto cause = encode_cause(in.cause);
    e.cause_states = cause.states;
    e.cause_cls = cause.cls;
    e.cm = cm_signal(cause.cls);
    e.knowledge_pooled = encode_and_pool_knowledge(in.knowledge);
    for (std::size_t t = 0; t < knowledge::kNumRelationTypes; ++t)
      e.refined[t] = refine_with_knowledge(cause.states, e.knowledge_pooled[t]);
    e.fused = gate_and_fuse(e.refined, e.cm.signal);
    return e;
  }

  // Decoder over [emotion slot, prefix tokens...]. Row r of the result
  // scores the token that follows prefix position r. Prefix token i sits at
  // position i + 1.
  DecodeOutput<T> decode(const Encoded<T>& enc, const std::vector<int>& prefix) const {
    if (prefix.size() >= cfg_.max_positions)
      throw IndexError("decode: prefix of " + std::to_string(prefix.size()) +
                       " tokens exceeds the position table");
    std::vector<int> positions(prefix.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i + 1);
    auto emo_slot = num::matmul(num::as_row(enc.emotion_logits), emo_to_model_);
    Tensor<T> x = emo_slot;
    if (!prefix.empty()) {
      auto tok = num::add(num::embedding_lookup(word_emb_, prefix),
                          num::embedding_lookup(pos_emb_, positions));
      x = num::concat_rows(emo_slot, tok);
    }
    DecodeOutput<T> out;
    for (const auto& layer : decoder_) {
      auto r = layer(x, enc.fused);
      x = r.out;
      out.cross_weights = std::move(r.cross_weights);
    }
    out.logits = cfg_.tie_output ? num::add_bias(num::matmul(x, num::transpose(word_emb_)), out_b_)
                                 : num::linear(x, out_w_, out_b_);
    return out;
  }

  // Next-token logits after the given prefix.
  Tensor<T> decode_step(const Encoded<T>& enc, const std::vector<int>& prefix) const {
    auto all = decode(enc, prefix).logits;
    return num::reshape(num::slice_rows(all, all.rows() - 1, 1), {cfg_.vocab_size});
  }

  // Teacher forcing: decoder sees [emotion, BOS, y_1..y_{n-1}] and the
  // returned rows score y_1..y_n. The emotion slot's own row is dropped.
  Tensor<T> teacher_forced_logits(const Encoded<T>& enc, const std::vector<int>& targets) const {
    if (targets.empty()) throw ContractError("teacher_forced_logits: empty target");
    std::vector<int> prefix{corpus::kBos};
    prefix.insert(prefix.end(), targets.begin(), targets.end() - 1);
    auto all = decode(enc, prefix).logits;
    return num::slice_rows(all, 1, targets.size());
  }

  // Greedy decoding; stops at EOS (not returned) or the step limit.
  std::vector<int> generate(const Encoded<T>& enc) const {
    num::NoGradGuard guard;
    std::vector<int> prefix{corpus::kBos}, out;
    for (std::size_t step = 0; step < cfg_.max_decode_steps; ++step) {
      auto logits = decode_step(enc, prefix);
      auto v = logits.values();
      const int next = static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
      if (next == corpus::kEos) break;
      out.push_back(next);
      prefix.push_back(next);
    }
    return out;
  }

  std::vector<int> generate(const ModelInput& in) const {
    num::NoGradGuard guard;
    return generate(encode(in));
  }

private:
  ModelConfig cfg_;
  ParamRegistry<T> reg_;
  Tensor<T> word_emb_, pos_emb_, state_emb_;
  Encoder<T> context_enc_, cause_enc_, knowledge_enc_, refine_enc_;
  Linear<T> refine_in_;
  Linear<T> emotion_head_;
  Tensor<T> emo_to_model_;
  std::array<Linear<T>, kNumCm> cm_repr_, cm_cls_;
  Linear<T> gate_hidden_, gate_out_;
  std::vector<DecoderLayer<T>> decoder_;
  Tensor<T> out_w_, out_b_;
};

} // namespace imagine::model
