#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "imagine/numerics/attention.hpp"
#include "imagine/numerics/ops.hpp"

namespace imagine::model {

using num::Tensor;

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

// Ordered parameter list. Order fixes checkpoint layout and optimizer state.
template <typename T>
class ParamRegistry {
public:
  explicit ParamRegistry(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> xavier(const std::string& name, std::size_t in, std::size_t out) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    return uniform(name, {in, out}, a);
  }

  Tensor<T> uniform(const std::string& name, num::Shape shape, double a) {
    std::uniform_real_distribution<double> dist(-a, a);
    std::vector<T> v(num::shape_size(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return add(name, Tensor<T>::from(std::move(shape), std::move(v), true));
  }

  Tensor<T> constant(const std::string& name, num::Shape shape, T value) {
    std::vector<T> v(num::shape_size(shape), value);
    return add(name, Tensor<T>::from(std::move(shape), std::move(v), true));
  }

  Tensor<T> add(const std::string& name, Tensor<T> t) {
    params_.push_back({name, t});
    return t;
  }

  const std::vector<NamedParam<T>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

private:
  std::mt19937_64 rng_;
  std::vector<NamedParam<T>> params_;
};

template <typename T>
struct Linear {
  Tensor<T> w, b;

  Linear() = default;
  Linear(ParamRegistry<T>& reg, const std::string& name, std::size_t in, std::size_t out)
      : w(reg.xavier(name + ".w", in, out)), b(reg.constant(name + ".b", {out}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return num::linear(x, w, b); }

  // Rank-1 in, rank-1 out.
  Tensor<T> apply_vec(const Tensor<T>& v) const {
    return num::reshape(num::linear(num::as_row(v), w, b), {w.shape()[1]});
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain, bias;
  T eps{};

  LayerNorm() = default;
  LayerNorm(ParamRegistry<T>& reg, const std::string& name, std::size_t d, double eps_)
      : gain(reg.constant(name + ".gain", {d}, T(1))),
        bias(reg.constant(name + ".bias", {d}, T(0))),
        eps(static_cast<T>(eps_)) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return num::layer_norm(x, gain, bias, eps); }
};

template <typename T>
num::AttentionParams<T> make_attention(ParamRegistry<T>& reg, const std::string& name,
                                       std::size_t d, std::size_t source_dim) {
  num::AttentionParams<T> p;
  p.wq = reg.xavier(name + ".wq", d, d);
  p.bq = reg.constant(name + ".bq", {d}, T(0));
  p.wk = reg.xavier(name + ".wk", source_dim, d);
  p.bk = reg.constant(name + ".bk", {d}, T(0));
  p.wv = reg.xavier(name + ".wv", source_dim, d);
  p.bv = reg.constant(name + ".bv", {d}, T(0));
  p.wo = reg.xavier(name + ".wo", d, d);
  p.bo = reg.constant(name + ".bo", {d}, T(0));
  return p;
}

template <typename T>
struct FeedForward {
  Linear<T> in, out;

  FeedForward() = default;
  FeedForward(ParamRegistry<T>& reg, const std::string& name, std::size_t d, std::size_t hidden)
      : in(reg, name + ".in", d, hidden), out(reg, name + ".out", hidden, d) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return out(num::relu(in(x))); }
};

// Post-norm transformer encoder layer.
template <typename T>
struct EncoderLayer {
  num::AttentionParams<T> attn;
  LayerNorm<T> ln1, ln2;
  FeedForward<T> ffn;
  std::size_t heads = 1;

  EncoderLayer() = default;
  EncoderLayer(ParamRegistry<T>& reg, const std::string& name, std::size_t d, std::size_t heads_,
               std::size_t ffn_dim, double eps)
      : attn(make_attention(reg, name + ".self_attn", d, d)),
        ln1(reg, name + ".ln1", d, eps),
        ln2(reg, name + ".ln2", d, eps),
        ffn(reg, name + ".ffn", d, ffn_dim),
        heads(heads_) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto a = num::multi_head_attention(x, x, x, heads, false, attn).out;
    auto h = ln1(num::add(x, a));
    return ln2(num::add(h, ffn(h)));
  }
};

template <typename T>
struct Encoder {
  std::vector<EncoderLayer<T>> layers;

  Encoder() = default;
  Encoder(ParamRegistry<T>& reg, const std::string& name, std::size_t n, std::size_t d,
          std::size_t heads, std::size_t ffn_dim, double eps) {
    for (std::size_t i = 0; i < n; ++i)
      layers.emplace_back(reg, name + "." + std::to_string(i), d, heads, ffn_dim, eps);
  }

  Tensor<T> operator()(Tensor<T> x) const {
    for (const auto& l : layers) x = l(x);
    return x;
  }
};

template <typename T>
struct DecoderLayerOutput {
  Tensor<T> out;
  std::vector<Tensor<T>> cross_weights;
};

// Causal self-attention, cross-attention over a memory of arbitrary width,
// feed-forward; post-norm throughout.
template <typename T>
struct DecoderLayer {
  num::AttentionParams<T> self_attn, cross_attn;
  LayerNorm<T> ln1, ln2, ln3;
  FeedForward<T> ffn;
  std::size_t heads = 1;

  DecoderLayer() = default;
  DecoderLayer(ParamRegistry<T>& reg, const std::string& name, std::size_t d,
               std::size_t memory_dim, std::size_t heads_, std::size_t ffn_dim, double eps)
      : self_attn(make_attention(reg, name + ".self_attn", d, d)),
        cross_attn(make_attention(reg, name + ".cross_attn", d, memory_dim)),
        ln1(reg, name + ".ln1", d, eps),
        ln2(reg, name + ".ln2", d, eps),
        ln3(reg, name + ".ln3", d, eps),
        ffn(reg, name + ".ffn", d, ffn_dim),
        heads(heads_) {}

  DecoderLayerOutput<T> operator()(const Tensor<T>& x, const Tensor<T>& memory) const {
    auto s = num::multi_head_attention(x, x, x, heads, true, self_attn).out;
    auto h1 = ln1(num::add(x, s));
    auto c = num::multi_head_attention(h1, memory, memory, heads, false, cross_attn);
    auto h2 = ln2(num::add(h1, c.out));
    return {ln3(num::add(h2, ffn(h2))), std::move(c.weights)};
  }
};

} // namespace imagine::model
