#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace shaftpose::nn {

// Scalar computation over a flat input vector. When `grad` is non-empty the computation
// must also write the analytic gradient into it.
using Computation = std::function<double(std::span<const double> inputs, std::span<double> grad)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Denominator floor for the relative error: gradients smaller than this are compared absolutely.
inline constexpr double kGradCheckFloor = 1e-4;

// Compares the analytic gradient with central differences; `indices` restricts the checked
// components (all when empty).
inline GradCheckResult grad_check(const Computation& f, std::vector<double> inputs, double h = 1e-5,
                                  std::span<const std::size_t> indices = {}) {
  std::vector<double> analytic(inputs.size(), 0.0);
  f(inputs, analytic);
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(inputs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }
  GradCheckResult worst;
  bool first = true;
  for (const std::size_t i : indices) {
    const double saved = inputs[i];
    // Divide by the step actually taken after rounding, not the nominal 2h.
    const double plus = saved + h, minus = saved - h;
    inputs[i] = plus;
    const double up = f(inputs, {});
    inputs[i] = minus;
    const double down = f(inputs, {});
    inputs[i] = saved;
    const double numeric = (up - down) / (plus - minus);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
    const double err = std::abs(analytic[i] - numeric) / denom;
    if (first || err > worst.max_rel_error) worst = {err, i, analytic[i], numeric};
    first = false;
  }
  return worst;
}

}  // namespace shaftpose::nn
