#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "imagine/numerics/ops.hpp"

namespace imagine::num {

// Projections for one attention block. Queries come from a d-wide source;
// keys and values may come from a source of different width.
template <typename T>
struct AttentionParams {
  Tensor<T> wq, bq;  // [d×d], [d]
  Tensor<T> wk, bk;  // [dk×d], [d]
  Tensor<T> wv, bv;  // [dk×d], [d]
  Tensor<T> wo, bo;  // [d×d], [d]

  std::size_t model_dim() const { return wq.shape()[1]; }
  std::size_t source_dim() const { return wk.shape()[0]; }
};

template <typename T>
struct AttentionOutput {
  Tensor<T> out;                  // [Lq×d]
  std::vector<Tensor<T>> weights;  // per head, [Lq×Lk]
};

template <typename T>
AttentionOutput<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& k,
                                        const Tensor<T>& v, std::size_t heads,
                                        bool causal_mask, const AttentionParams<T>& p) {
  const std::size_t d = p.model_dim();
  if (heads == 0 || d % heads != 0)
    throw ConfigError("multi_head_attention: model width " + std::to_string(d) +
                      " is not divisible by " + std::to_string(heads) + " heads");
  if (q.cols() != d)
    throw DimensionError("multi_head_attention: query width " + std::to_string(q.cols()) +
                         " vs model width " + std::to_string(d));
  if (k.cols() != p.source_dim() || v.cols() != p.source_dim())
    throw DimensionError("multi_head_attention: key/value width must be " +
                         std::to_string(p.source_dim()));
  if (k.rows() != v.rows()) throw DimensionError("multi_head_attention: key/value lengths differ");

  const std::size_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
  auto Q = linear(q, p.wq, p.bq);
  auto K = linear(k, p.wk, p.bk);
  auto V = linear(v, p.wv, p.bv);

  AttentionOutput<T> result;
  std::vector<Tensor<T>> head_out;
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = slice_cols(Q, h * dh, dh);
    auto kh = slice_cols(K, h * dh, dh);
    auto vh = slice_cols(V, h * dh, dh);
    auto scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    auto w = softmax_rows(scores, causal_mask);
    head_out.push_back(matmul(w, vh));
    result.weights.push_back(w);
  }
  auto merged = heads == 1 ? head_out.front() : concat_last(head_out);
  result.out = linear(merged, p.wo, p.bo);
  return result;
}

} // namespace imagine::num
