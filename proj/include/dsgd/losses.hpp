#pragma once

// Objective primitives shared by every head. Each function returns the loss
// value and, when `grad` is non-empty, adds `weight * dLoss/dInput` into it.
// They are templates so the finite-difference oracles can run in double.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <span>
#include <stdexcept>

#include "dsgd/error.hpp"

namespace dsgd {

struct LossConfig {
  double lambda1 = 0.4;
  double lambda2 = 0.4;
  double lambda3 = 0.4;

  void validate() const {
    for (double l : {lambda1, lambda2, lambda3})
      if (!(l >= 0 && l <= 1)) throw ConfigError("loss weights must lie in [0, 1]");
  }
};

inline constexpr double kSegEps = 1e-7;

/// ||r - target||_2 / ||target||_2.
template <std::floating_point T>
T l_reg(std::span<const T> r, std::span<const T> target, std::span<T> grad = {}, T weight = 1) {
  if (r.size() != target.size()) throw std::invalid_argument("l_reg: dimension mismatch");
  T diff2 = 0, tgt2 = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    diff2 += (r[i] - target[i]) * (r[i] - target[i]);
    tgt2 += target[i] * target[i];
  }
  if (!(tgt2 > 0)) throw Error("l_reg: zero-norm regression target");
  const T num = std::sqrt(diff2), den = std::sqrt(tgt2);
  if (!grad.empty() && num > 0) {
    const T s = weight / (num * den);
    for (std::size_t i = 0; i < r.size(); ++i) grad[i] += s * (r[i] - target[i]);
  }
  return num / den;
}

/// Softmax cross-entropy -log p_c.
template <std::floating_point T>
T l_cls(std::span<const T> logits, int c, std::span<T> grad = {}, T weight = 1) {
  if (c < 0 || static_cast<std::size_t>(c) >= logits.size())
    throw std::out_of_range("l_cls: class index out of range");
  const T mx = *std::max_element(logits.begin(), logits.end());
  T z = 0;
  for (T v : logits) z += std::exp(v - mx);
  const T log_z = std::log(z) + mx;
  if (!grad.empty()) {
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const T p = std::exp(logits[i] - log_z);
      grad[i] += weight * (p - (static_cast<int>(i) == c ? T{1} : T{0}));
    }
  }
  return log_z - logits[c];
}

/// Mean pixel-wise binary cross-entropy on probabilities clamped to [eps, 1-eps].
template <std::floating_point T>
T l_seg(std::span<const T> pred, std::span<const T> target, std::span<T> grad = {}, T weight = 1) {
  if (pred.size() != target.size() || pred.empty())
    throw std::invalid_argument("l_seg: dimension mismatch");
  const T eps = static_cast<T>(kSegEps);
  const T n = static_cast<T>(pred.size());
  T sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T p = std::clamp(pred[i], eps, 1 - eps);
    const T y = target[i];
    sum -= y * std::log(p) + (1 - y) * std::log(1 - p);
    if (!grad.empty() && pred[i] > eps && pred[i] < 1 - eps)
      grad[i] += weight * (-y / p + (1 - y) / (1 - p)) / n;
  }
  return sum / n;
}

/// l_seg applied to sigmoid(logits), evaluated without the clamp so that
/// saturated predictions keep a gradient.
template <std::floating_point T>
T l_seg_logits(std::span<const T> logits, std::span<const T> target, std::span<T> grad = {},
               T weight = 1) {
  if (logits.size() != target.size() || logits.empty())
    throw std::invalid_argument("l_seg_logits: dimension mismatch");
  const T n = static_cast<T>(logits.size());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const T z = logits[i], y = target[i];
    // log(1 + exp(-|z|)) + max(z, 0) - y z
    sum += std::max(z, T{0}) - y * z + std::log1p(std::exp(-std::abs(z)));
    if (!grad.empty()) grad[i] += weight * (T{1} / (1 + std::exp(-z)) - y) / n;
  }
  return sum / n;
}

}  // namespace dsgd
