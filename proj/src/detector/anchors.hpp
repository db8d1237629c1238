#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "../geometry.hpp"
#include "../image.hpp"

namespace shaftpose {

// Area of the intersection over the area of the union; 0 if either box is degenerate.
double box_iou(const Box& a, const Box& b);

// Center-size offsets relative to an anchor, without variance scaling:
// ((cx_g - cx_a) / w_a, (cy_g - cy_a) / h_a, ln(w_g / w_a), ln(h_g / h_a)).
std::array<double, 4> encode_box(const Box& gt, const Box& anchor);
Box decode_box(std::span<const double, 4> offsets, const Box& anchor);
Box decode_box(const std::array<double, 4>& offsets, const Box& anchor);

struct AnchorConfig {
  std::vector<double> aspect_ratios{1.0, 2.0, 0.5};
  bool extra_square = true;  // one more ratio-1 box at sqrt(s_k * s_{k+1})
  double min_scale = 0.2;
  double max_scale = 0.9;

  int per_location() const { return static_cast<int>(aspect_ratios.size()) + (extra_square ? 1 : 0); }
  void validate() const;
  bool operator==(const AnchorConfig&) const = default;
};

struct AnchorLevel {
  int size = 0;               // square grid: size x size locations
  int per_location = 0;       // boxes per location
  std::size_t offset = 0;     // first global anchor index of this level
  std::size_t count() const { return static_cast<std::size_t>(size) * size * per_location; }
};

struct AnchorLocation {
  int level;
  int y;
  int x;
  int box;
  bool operator==(const AnchorLocation&) const = default;
};

// Default boxes of all levels, flattened in (level, y, x, box) order.
struct AnchorSet {
  int image_size = 0;
  std::vector<AnchorLevel> levels;
  std::vector<Box> boxes;

  std::size_t size() const { return boxes.size(); }
  std::size_t index(const AnchorLocation& loc) const;
  AnchorLocation locate(std::size_t index) const;
};

// Per level k of m: scale s_k = min + (max - min)(k-1)/(m-1); widths are clipped to the image.
AnchorSet build_anchors(int image_size, std::span<const int> level_sizes, const AnchorConfig& config);

struct MatchResult {
  std::vector<int> gt_index;  // matched ground truth per anchor, -1 for negatives
  std::vector<double> iou;    // IoU with the matched (or best) ground truth
  std::size_t positives() const;
};

// Anchors with best-gt IoU >= threshold are matched to that gt (lower gt index wins ties);
// then each gt's highest-IoU anchor (lower anchor index wins ties) is force-matched to it,
// provided the IoU is positive. A force-matched anchor keeps the lowest gt index claiming it.
MatchResult match_anchors(std::span<const Box> anchors, std::span<const Box> gts, double threshold = 0.5);

// Negatives with the largest confidence loss, min(floor(ratio * max(#pos, 1)), #neg) of them;
// equal losses prefer the lower anchor index.
std::vector<std::uint8_t> hard_negative_mine(std::span<const double> conf_loss, std::span<const std::uint8_t> positive,
                                             double ratio = 3.0);

// Per-image training targets.
struct ImageTargets {
  std::vector<std::uint8_t> positive;                 // class: 1 = instrument, 0 = background
  std::vector<std::array<double, 4>> box;             // zero for negatives
  std::optional<std::vector<NormalizedPose>> pose;    // absent when the image carries no pose labels

  std::size_t positives() const;
};

// Throws Error(kInvalidArgument) if `require_pose` and `poses` is absent.
ImageTargets build_targets(const AnchorSet& anchors, const MatchResult& matches, std::span<const Box> gts,
                           const std::optional<std::vector<ShaftPose>>& poses, const PoseRanges& ranges,
                           bool require_pose = false);

}  // namespace shaftpose
