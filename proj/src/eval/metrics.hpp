#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "../geometry.hpp"
#include "../renderer.hpp"
#include "detect.hpp"

namespace shaftpose {

struct GroundTruth {
  Box bbox;
  std::optional<ShaftPose> pose;
};

using ImageDetections = std::vector<Detection>;
using ImageTruths = std::vector<GroundTruth>;

// PASCAL VOC 2010 all-point interpolated AP for the single instrument class. Detections of all
// images are ranked by score (ties: image index, then list position); each gt matches at most once.
double average_precision(std::span<const ImageDetections> detections, std::span<const ImageTruths> truths,
                         double iou_threshold = 0.5);

// Fraction of gts with at least one detection at IoU >= threshold; 0 when there are no gts.
double detected_rate(std::span<const ImageDetections> detections, std::span<const ImageTruths> truths,
                     double iou_threshold = 0.5);

struct PoseErrors {
  std::array<double, kPoseDims> mae{};  // x, y, z in mm; pitch, yaw in degrees
  std::size_t matched = 0;
  std::size_t unmatched = 0;  // pose-labelled gts without a detection at IoU >= threshold
};

// Per pose-labelled gt, the detection with the highest box IoU (>= threshold; first wins ties)
// supplies the pose. Yaw uses the circular distance.
PoseErrors pose_error_report(std::span<const ImageDetections> detections, std::span<const ImageTruths> truths,
                             double iou_threshold = 0.5);

// MAE of always predicting the range midpoint, over all pose-labelled gts.
PoseErrors midpoint_baseline(std::span<const ImageTruths> truths, const PoseRanges& ranges);

// Sum over dimensions of MAE / range width.
double normalized_total_mae(const PoseErrors& errors, const PoseRanges& ranges);

// Per gt, the highest-scoring detection with box IoU >= threshold is re-rendered and compared with
// the gt mask; unmatched gts count as 0. Mean over all gts, 0 when there are none.
double rerender_iou(std::span<const ImageDetections> detections, std::span<const ImageTruths> truths,
                    std::span<const std::vector<Mask>> masks, const CameraModel& camera, const ShaftGeometry& geometry,
                    double iou_threshold = 0.5);

}  // namespace shaftpose
