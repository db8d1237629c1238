#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "tensor.hpp"

namespace shaftpose::nn {

template <typename T>
T smooth_l1(T x) {
  const T a = std::abs(x);
  return a < T(1) ? T(0.5) * x * x : a - T(0.5);
}

template <typename T>
T smooth_l1_grad(T x) {
  if (x >= T(1)) return T(1);
  if (x <= T(-1)) return T(-1);
  return x;
}

// Per-row softmax cross-entropy against one-hot targets. logits and one_hot are rows x classes;
// rows with mask == 0 yield loss 0. Losses are written unreduced to `loss`.
template <typename T>
void softmax_cross_entropy(std::span<const T> logits, std::span<const T> one_hot, std::span<const std::uint8_t> mask,
                           int classes, std::span<T> loss) {
  const std::size_t rows = loss.size();
  require(logits.size() == rows * classes && one_hot.size() == rows * classes && mask.size() == rows,
          "softmax_cross_entropy: size mismatch");
  for (std::size_t r = 0; r < rows; ++r) {
    if (!mask[r]) {
      loss[r] = T(0);
      continue;
    }
    const T* z = logits.data() + r * classes;
    const T* t = one_hot.data() + r * classes;
    T mx = z[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, z[c]);
    if (!std::isfinite(mx)) fail(ErrorCode::kNumeric, "softmax_cross_entropy: non-finite logits");
    T sum = 0;
    for (int c = 0; c < classes; ++c) sum += std::exp(z[c] - mx);
    const T log_sum = mx + std::log(sum);
    T l = 0;
    for (int c = 0; c < classes; ++c) l += t[c] * (log_sum - z[c]);
    loss[r] = l;
  }
}

// Adds weight[r] * d loss_r / d logits_r into dlogits for every row with nonzero weight.
template <typename T>
void softmax_cross_entropy_backward(std::span<const T> logits, std::span<const T> one_hot,
                                    std::span<const T> weight, int classes, std::span<T> dlogits) {
  const std::size_t rows = weight.size();
  for (std::size_t r = 0; r < rows; ++r) {
    if (weight[r] == T(0)) continue;
    const T* z = logits.data() + r * classes;
    const T* t = one_hot.data() + r * classes;
    T* d = dlogits.data() + r * classes;
    T mx = z[0];
    for (int c = 1; c < classes; ++c) mx = std::max(mx, z[c]);
    T sum = 0, tsum = 0;
    for (int c = 0; c < classes; ++c) {
      sum += std::exp(z[c] - mx);
      tsum += t[c];
    }
    for (int c = 0; c < classes; ++c) d[c] += weight[r] * (tsum * std::exp(z[c] - mx) / sum - t[c]);
  }
}

}  // namespace shaftpose::nn
