#include "loss.hpp"

#include "../error.hpp"

namespace shaftpose {

void LossConfig::validate() const {
  if (!(alpha >= 0.0)) fail(ErrorCode::kConfig, "loss: alpha must be non-negative");
  if (!(gamma > 0.0)) fail(ErrorCode::kConfig, "loss: gamma must be positive");
  for (double b : beta) {
    if (!(b >= 0.0)) fail(ErrorCode::kConfig, "loss: beta weights must be non-negative");
  }
  if (!(neg_pos_ratio >= 1.0)) fail(ErrorCode::kConfig, "loss: negative/positive ratio must be at least 1");
}

std::vector<AnchorAddress> anchor_addresses(const AnchorSet& anchors) {
  std::vector<AnchorAddress> out;
  out.reserve(anchors.size());
  for (int k = 0; k < static_cast<int>(anchors.levels.size()); ++k) {
    const auto& l = anchors.levels[k];
    for (std::size_t cell = 0; cell < static_cast<std::size_t>(l.size) * l.size; ++cell) {
      for (int b = 0; b < l.per_location; ++b) out.push_back({k, cell, b});
    }
  }
  return out;
}

}  // namespace shaftpose
