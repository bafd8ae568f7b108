#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imagine/numerics/tensor.hpp"

namespace imagine::num {

namespace detail {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
}

template <typename T>
void accumulate(Node<T>& dst, std::span<const T> g) {
  if (!dst.requires_grad) return;
  auto& acc = dst.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
}

// C[m×n] += A[m×k] · B[k×n], all row-major.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]^T
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T s = 0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] += s;
    }
  }
}

// C[k×n] += A[m×k]^T · B[m×n]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

} // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  std::vector<T> out(m * n, T(0));
  detail::gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad)
      detail::gemm_nt_acc(self.grad.data(), nb.value.data(), na.ensure_grad().data(), m, n, k);
    if (nb.requires_grad)
      detail::gemm_tn_acc(na.value.data(), self.grad.data(), nb.ensure_grad().data(), m, k, n);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<T> out(m * n);
  auto v = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return make_result<T>({n, m}, std::move(out), {a}, [m, n](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    auto& g = na.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

// Same values, new shape of equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size())
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                         shape_str(shape));
  std::vector<T> out(a.values().begin(), a.values().end());
  return make_result<T>(std::move(shape), std::move(out), {a}, [](Node<T>& self) {
    detail::accumulate<T>(*self.inputs[0], self.grad);
  });
}

template <typename T>
Tensor<T> as_row(const Tensor<T>& v) {
  return reshape(v, {1, v.size()});
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    detail::accumulate<T>(*self.inputs[0], self.grad);
    detail::accumulate<T>(*self.inputs[1], self.grad);
  });
}

// a[m×n] + bias[n], bias broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  const std::size_t n = a.cols();
  if (bias.size() != n)
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not fit " +
                         shape_str(a.shape()));
  std::vector<T> out(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % n];
  return make_result<T>(a.shape(), std::move(out), {a, bias}, [n](Node<T>& self) {
    detail::accumulate<T>(*self.inputs[0], self.grad);
    Node<T>& nb = *self.inputs[1];
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& nb = *self.inputs[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& x : out) x *= c;
  return make_result<T>(a.shape(), std::move(out), {a}, [c](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    auto& g = na.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
  });
}

// a scaled by a one-element tensor s; both receive gradients.
template <typename T>
Tensor<T> scale_by(const Tensor<T>& a, const Tensor<T>& s) {
  if (s.size() != 1)
    throw DimensionError("scale_by: factor must hold one value, got " + shape_str(s.shape()));
  const T c = s[0];
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& x : out) x *= c;
  return make_result<T>(a.shape(), std::move(out), {a, s}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    Node<T>& ns = *self.inputs[1];
    const T c = ns.value[0];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
    }
    if (ns.requires_grad) {
      T acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * na.value[i];
      ns.ensure_grad()[0] += acc;
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T x : a.values()) s += x;
  return make_result<T>({}, {s}, {a}, [](Node<T>& self) {
    Node<T>& na = *self.inputs[0];
    auto& g = na.ensure_grad();
    for (auto& x : g) x += self.grad[0];
  });
}

// Element i of a as a scalar.
template <typename T>
Tensor<T> pick(const Tensor<T>& a, std::size_t i) {
  if (i >= a.size())
    throw IndexError("pick: index " + std::to_string(i) + " outside " + shape_str(a.shape()));
  return make_result<T>({}, {a[i]}, {a}, [i](Node<T>& self) {
    self.inputs[0]->ensure_grad()[i] += self.grad[0];
  });
}

// Σ weights[i]·parts[i] over scalar tensors, accumulated left to right.
template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& parts, const std::vector<T>& weights) {
  if (parts.size() != weights.size())
    throw DimensionError("weighted_sum: " + std::to_string(parts.size()) + " parts, " +
                         std::to_string(weights.size()) + " weights");
  T s = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].size() != 1) throw DimensionError("weighted_sum: parts must be scalars");
    s += weights[i] * parts[i][0];
  }
  return make_result<T>({}, {s}, parts, [weights](Node<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i)
      if (self.inputs[i]->requires_grad) self.inputs[i]->ensure_grad()[0] += weights[i] * self.grad[0];
  });
}

// Row-wise softmax with max subtraction. With `causal`, entry (i, j) for
// j > i is exactly zero.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, bool causal = false) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(x.size(), T(0));
  auto v = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t lim = causal ? std::min(n, i + 1) : n;
    const T* row = v.data() + i * n;
    T* o = out.data() + i * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < lim; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (std::size_t j = 0; j < lim; ++j) z += (o[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < lim; ++j) o[j] /= z;
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [m, n](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.value.data() + i * n;
      const T* gy = self.grad.data() + i * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || bias.size() != n)
    throw DimensionError("layer_norm: affine params must have " + std::to_string(n) + " values");
  std::vector<T> xhat(x.size()), out(x.size()), inv_std(m);
  auto v = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = v.data() + i * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(n);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mean) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gain[j] + bias[j];
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), {x, gain, bias},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        Node<T>& nx = *self.inputs[0];
        Node<T>& ng = *self.inputs[1];
        Node<T>& nb = *self.inputs[2];
        if (ng.requires_grad) {
          auto& g = ng.ensure_grad();
          for (std::size_t i = 0; i < m * n; ++i) g[i % n] += self.grad[i] * xhat[i];
        }
        if (nb.requires_grad) {
          auto& g = nb.ensure_grad();
          for (std::size_t i = 0; i < m * n; ++i) g[i % n] += self.grad[i];
        }
        if (nx.requires_grad) {
          auto& g = nx.ensure_grad();
          std::vector<T> dxhat(n);
          for (std::size_t i = 0; i < m; ++i) {
            T sum_d = 0, sum_dx = 0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = self.grad[i * n + j] * ng.value[j];
              sum_d += dxhat[j];
              sum_dx += dxhat[j] * xhat[i * n + j];
            }
            for (std::size_t j = 0; j < n; ++j)
              g[i * n + j] += inv_std[i] / T(n) *
                              (T(n) * dxhat[j] - sum_d - xhat[i * n + j] * sum_dx);
          }
        }
      });
}

enum class Activation { relu, sigmoid };

template <typename T>
Tensor<T> activation(Activation kind, const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = kind == Activation::relu ? std::max(T(0), x[i]) : T(1) / (T(1) + std::exp(-x[i]));
  return make_result<T>(x.shape(), std::move(out), {x}, [kind](Node<T>& self) {
    Node<T>& nx = *self.inputs[0];
    auto& g = nx.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T y = self.value[i];
      g[i] += kind == Activation::relu ? (nx.value[i] > T(0) ? self.grad[i] : T(0))
                                       : self.grad[i] * y * (T(1) - y);
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return activation(Activation::relu, x);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return activation(Activation::sigmoid, x);
}

// Column-wise concatenation of matrices with equal row counts. Rank-1
// operands are broadcast over every row.
template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_last: nothing to concatenate");
  std::optional<std::size_t> rows;
  for (const auto& p : parts) {
    if (p.rank() == 2) {
      if (rows && *rows != p.shape()[0])
        throw DimensionError("concat_last: row counts differ (" + std::to_string(*rows) +
                             " vs " + shape_str(p.shape()) + ")");
      rows = p.shape()[0];
    } else if (p.rank() != 1) {
      throw DimensionError("concat_last: unsupported operand " + shape_str(p.shape()));
    }
  }
  const bool all_vectors = !rows;
  const std::size_t m = rows.value_or(1);
  std::vector<std::size_t> widths, offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    offsets.push_back(total);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(m * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    const bool bcast = parts[k].rank() == 1;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j)
        out[i * total + offsets[k] + j] = v[(bcast ? 0 : i * widths[k]) + j];
  }
  Shape shape = all_vectors ? Shape{total} : Shape{m, total};
  return make_result<T>(
      std::move(shape), std::move(out), parts,
      [m, total, widths, offsets](Node<T>& self) {
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
          Node<T>& in = *self.inputs[k];
          if (!in.requires_grad) continue;
          auto& g = in.ensure_grad();
          const bool bcast = in.shape.size() == 1;
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
              g[(bcast ? 0 : i * widths[k]) + j] += self.grad[i * total + offsets[k] + j];
        }
      });
}

template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_last<T>(std::vector<Tensor<T>>{a, b});
}

// Columns [start, start+count) of a matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t count) {
  detail::require_rank2(a, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (start + count > n)
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(a.shape()));
  std::vector<T> out(m * count);
  auto v = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = v[i * n + start + j];
  return make_result<T>({m, count}, std::move(out), {a}, [m, n, start, count](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += self.grad[i * count + j];
  });
}

// Rows [start, start+count) of a matrix.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t start, std::size_t count) {
  detail::require_rank2(a, "slice_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (start + count > m)
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " + shape_str(a.shape()));
  const auto first = a.values().begin() + static_cast<std::ptrdiff_t>(start * n);
  std::vector<T> out(first, first + static_cast<std::ptrdiff_t>(count * n));
  return make_result<T>({count, n}, std::move(out), {a}, [start, n](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * n + i] += self.grad[i];
  });
}

// Vertical stacking of two matrices with equal column counts.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& top, const Tensor<T>& bottom) {
  detail::require_rank2(top, "concat_rows");
  detail::require_rank2(bottom, "concat_rows");
  const std::size_t n = top.shape()[1];
  if (bottom.shape()[1] != n)
    throw DimensionError("concat_rows: column counts differ for " + shape_str(top.shape()) +
                         " and " + shape_str(bottom.shape()));
  const std::size_t split = top.size();
  std::vector<T> out(top.values().begin(), top.values().end());
  out.insert(out.end(), bottom.values().begin(), bottom.values().end());
  return make_result<T>({top.shape()[0] + bottom.shape()[0], n}, std::move(out), {top, bottom},
                        [split](Node<T>& self) {
                          std::span<const T> g(self.grad);
                          detail::accumulate<T>(*self.inputs[0], g.first(split));
                          detail::accumulate<T>(*self.inputs[1], g.subspan(split));
                        });
}

enum class Reduce { mean_rows, first_row };

template <typename T>
Tensor<T> reduce(Reduce kind, const Tensor<T>& x) {
  detail::require_rank2(x, "reduce");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (m == 0) throw DimensionError("reduce: empty tensor " + shape_str(x.shape()));
  std::vector<T> out(n, T(0));
  auto v = x.values();
  if (kind == Reduce::first_row) {
    std::copy(v.begin(), v.begin() + n, out.begin());
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += v[i * n + j];
    for (auto& o : out) o /= T(m);
  }
  return make_result<T>({n}, std::move(out), {x}, [kind, m, n](Node<T>& self) {
    auto& g = self.inputs[0]->ensure_grad();
    if (kind == Reduce::first_row) {
      for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[j];
    } else {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j] / T(m);
    }
  });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids) {
  detail::require_rank2(table, "embedding_lookup");
  const std::size_t V = table.shape()[0], d = table.shape()[1];
  std::vector<T> out(ids.size() * d);
  auto v = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V)
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) +
                       " outside table of " + std::to_string(V) + " rows");
    std::copy_n(v.begin() + static_cast<std::size_t>(ids[i]) * d, d, out.begin() + i * d);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_result<T>({ids.size(), d}, std::move(out), {table},
                        [idx = std::move(idx), d](Node<T>& self) {
                          auto& g = self.inputs[0]->ensure_grad();
                          for (std::size_t i = 0; i < idx.size(); ++i)
                            for (std::size_t j = 0; j < d; ++j)
                              g[static_cast<std::size_t>(idx[i]) * d + j] += self.grad[i * d + j];
                        });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int>& ids) {
  return embedding_lookup(table, std::span<const int>(ids));
}

namespace detail {

// log Σ exp(row) via max shift.
template <typename T>
T log_sum_exp(const T* row, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
  T z = 0;
  for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
  return mx + std::log(z);
}

} // namespace detail

// −log softmax(logits)[target].
template <typename T>
Tensor<T> cross_entropy_from_logits(const Tensor<T>& logits, int target) {
  const std::size_t n = logits.size();
  if (target < 0 || static_cast<std::size_t>(target) >= n)
    throw IndexError("cross_entropy_from_logits: target " + std::to_string(target) +
                     " outside " + std::to_string(n) + " classes");
  const T lse = detail::log_sum_exp(logits.values().data(), n);
  const T loss = lse - logits[static_cast<std::size_t>(target)];
  return make_result<T>({}, {loss}, {logits}, [n, target, lse](Node<T>& self) {
    Node<T>& nl = *self.inputs[0];
    auto& g = nl.ensure_grad();
    for (std::size_t j = 0; j < n; ++j) {
      const T p = std::exp(nl.value[j] - lse);
      g[j] += self.grad[0] * (p - (static_cast<int>(j) == target ? T(1) : T(0)));
    }
  });
}

// Σ_t w[targets[t]] · (−log softmax(logits_t)[targets[t]]) over the rows of
// logits. Without weights every step counts once.
template <typename T>
Tensor<T> sequence_nll(const Tensor<T>& logits, std::span<const int> targets,
                       std::span<const T> token_weights = {}) {
  const std::size_t m = logits.rows(), V = logits.cols();
  if (targets.size() != m)
    throw ContractError("sequence_nll: " + std::to_string(m) + " logit rows for " +
                        std::to_string(targets.size()) + " targets");
  if (!token_weights.empty() && token_weights.size() != V)
    throw DimensionError("sequence_nll: weight vector has " +
                         std::to_string(token_weights.size()) + " entries, vocabulary " +
                         std::to_string(V));
  std::vector<T> lse(m), w(m, T(1));
  T loss = 0;
  auto v = logits.values();
  for (std::size_t t = 0; t < m; ++t) {
    const int y = targets[t];
    if (y < 0 || static_cast<std::size_t>(y) >= V)
      throw IndexError("sequence_nll: target " + std::to_string(y) + " outside vocabulary " +
                       std::to_string(V));
    lse[t] = detail::log_sum_exp(v.data() + t * V, V);
    const T ce = lse[t] - v[t * V + static_cast<std::size_t>(y)];
    if (token_weights.empty()) {
      loss += ce;
    } else {
      w[t] = token_weights[static_cast<std::size_t>(y)];
      loss += w[t] * ce;
    }
  }
  std::vector<int> ys(targets.begin(), targets.end());
  return make_result<T>({}, {loss}, {logits},
                        [m, V, ys = std::move(ys), lse = std::move(lse), w = std::move(w)](Node<T>& self) {
                          Node<T>& nl = *self.inputs[0];
                          auto& g = nl.ensure_grad();
                          const T up = self.grad[0];
                          for (std::size_t t = 0; t < m; ++t) {
                            if (w[t] == T(0)) continue;
                            const T s = up * w[t];
                            for (std::size_t j = 0; j < V; ++j) {
                              const T p = std::exp(nl.value[t * V + j] - lse[t]);
                              g[t * V + j] += s * (p - (static_cast<int>(j) == ys[t] ? T(1) : T(0)));
                            }
                          }
                        });
}

template <typename T>
Tensor<T> sequence_nll(const Tensor<T>& logits, const std::vector<int>& targets,
                       const std::vector<T>& token_weights = {}) {
  return sequence_nll(logits, std::span<const int>(targets), std::span<const T>(token_weights));
}

// x[m×in] · W[in×out] + b[out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_bias(matmul(x, w), b);
}

} // namespace imagine::num
