#pragma once

#include <cmath>
#include <vector>

#include "imagine/errors.hpp"
#include "imagine/numerics/tensor.hpp"

namespace imagine::training {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
  std::vector<std::vector<T>> first, second;
};

// Bias-corrected Adam update at step t (t ≥ 1) using each tensor's grad.
template <typename T>
void adam_step(std::vector<num::Tensor<T>>& params, AdamMoments<T>& moments, const AdamConfig& cfg,
               std::size_t t) {
  if (t < 1) throw ContractError("adam_step: step count starts at 1");
  if (moments.first.size() != params.size()) {
    moments.first.resize(params.size());
    moments.second.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      moments.first[i].assign(params[i].size(), T(0));
      moments.second[i].assign(params[i].size(), T(0));
    }
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto vals = params[i].values();
    auto grad = params[i].grad();
    auto& m = moments.first[i];
    auto& v = moments.second[i];
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const T g = grad[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[k]) / bc1;
      const double vhat = static_cast<double>(v[k]) / bc2;
      vals[k] -= static_cast<T>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

} // namespace imagine::training
