#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace shaftpose::nn {

struct LrSchedule {
  double base_lr = 1e-3;
  std::int64_t total_steps = 6000;
  double power = 2.0;
};

// base_lr * (1 - min(step, total) / total)^power
inline double poly_decay_lr(std::int64_t step, const LrSchedule& schedule) {
  require(step >= 0, "poly_decay_lr: step must be non-negative");
  if (schedule.total_steps <= 0) return 0.0;
  const double frac = static_cast<double>(std::min(step, schedule.total_steps)) / static_cast<double>(schedule.total_steps);
  return schedule.base_lr * std::pow(1.0 - frac, schedule.power);
}

template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// One bias-corrected Adam update over every parameter tensor, using its accumulated gradient.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state, double lr) {
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->size(), T(0));
      state.v.emplace_back(p->size(), T(0));
    }
  }
  require(state.m.size() == params.size(), "adam_step: parameter list changed");
  for (const auto* p : params) check_finite<T>(p->grads(), "adam_step (gradient)");

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  const T step_size = static_cast<T>(lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(state.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    require(m.size() == params[i]->size(), "adam_step: moment shape mismatch");
    T* w = params[i]->data();
    const T* g = params[i]->grad();
    for (std::size_t k = 0; k < m.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_c2 + eps);
    }
  }
}

}  // namespace shaftpose::nn
