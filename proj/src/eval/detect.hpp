#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "../detector/model.hpp"
#include "../geometry.hpp"
#include "../image.hpp"

namespace shaftpose {

struct Detection {
  Box bbox;
  double score = 0.0;  // instrument-class softmax probability
  ShaftPose pose;
  std::size_t anchor = 0;

  bool operator==(const Detection&) const = default;
};

struct DetectConfig {
  int top_k = 250;
  double score_threshold = 0.5;
  double nms_iou = 0.45;

  void validate() const;
};

// Indices of the k largest scores, best first; equal scores keep the lower index first.
std::vector<std::size_t> select_topk(std::span<const double> scores, int k);

// Greedy suppression in (score desc, anchor asc) order; drops boxes with IoU >= threshold
// against an already kept one.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

// Instrument probability per anchor of batch item `item`, in global anchor order.
std::vector<double> anchor_scores(const DetectorModel<float>& model, int item);

// Candidates of one batch item after forward(): top-k, score gate, box decode, NMS, pose decode.
std::vector<Detection> decode_detections(const DetectorModel<float>& model, int item, const DetectConfig& config,
                                         const PoseRanges& ranges);

// Runs the model in eval mode over `images` in chunks of `batch_size`.
std::vector<std::vector<Detection>> detect(DetectorModel<float>& model, std::span<const Image* const> images,
                                           const DetectConfig& config, const PoseRanges& ranges, int batch_size = 32);

}  // namespace shaftpose
