#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace shaftpose {

struct GradCheckEntry {
  std::string op;
  int trials = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed() const;
  std::string text() const;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  int trials = 10;  // random shapes per op
  // Test fixture: scales the analytic gradient of this op by 1.1 to emulate a broken backward.
  std::string inject_fault;
};

std::vector<std::string> grad_check_ops();
GradCheckReport run_grad_checks(const GradCheckOptions& options);

}  // namespace shaftpose
