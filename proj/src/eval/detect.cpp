#include "detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../detector/loss.hpp"
#include "../detector/trainer.hpp"
#include "../error.hpp"

namespace shaftpose {

void DetectConfig::validate() const {
  if (top_k < 1) fail(ErrorCode::kConfig, "eval: top_k must be at least 1");
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) fail(ErrorCode::kConfig, "eval: score_threshold must lie in [0,1]");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) fail(ErrorCode::kConfig, "eval: nms_iou must lie in (0,1]");
}

std::vector<std::size_t> select_topk(std::span<const double> scores, int k) {
  require(k >= 1, "select_topk: k must be at least 1");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const std::size_t n = std::min(idx.size(), static_cast<std::size_t>(k));
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(n);
  return idx;
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  std::sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
    return a.score > b.score || (a.score == b.score && a.anchor < b.anchor);
  });
  std::vector<Detection> kept;
  for (const auto& d : detections) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (box_iou(d.bbox, k.bbox) >= iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<double> anchor_scores(const DetectorModel<float>& model, int item) {
  const auto& anchors = model.anchors();
  const auto addr = anchor_addresses(anchors);
  std::vector<double> scores(anchors.size());
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const auto& cls = *model.outputs(addr[a].level).cls;
    const double l0 = cls[map_index(cls, item, addr[a], kNumClasses, 0)];
    const double l1 = cls[map_index(cls, item, addr[a], kNumClasses, 1)];
    scores[a] = 1.0 / (1.0 + std::exp(l0 - l1));
  }
  return scores;
}

std::vector<Detection> decode_detections(const DetectorModel<float>& model, int item, const DetectConfig& config,
                                         const PoseRanges& ranges) {
  const auto& anchors = model.anchors();
  const auto addr = anchor_addresses(anchors);
  const auto scores = anchor_scores(model, item);
  std::vector<Detection> candidates;
  for (const std::size_t a : select_topk(scores, config.top_k)) {
    if (scores[a] < config.score_threshold) continue;
    const auto out = model.outputs(addr[a].level);
    std::array<double, 4> off;
    for (int d = 0; d < kBoxDims; ++d) off[d] = (*out.box)[map_index(*out.box, item, addr[a], kBoxDims, d)];
    NormalizedPose np;
    for (std::size_t p = 0; p < kPoseDims; ++p) {
      np[p] = (*out.pose)[map_index(*out.pose, item, addr[a], kPoseDims, static_cast<int>(p))];
    }
    candidates.push_back({decode_box(off, anchors.boxes[a]), scores[a], denormalize_pose(np, ranges), a});
  }
  return nms(std::move(candidates), config.nms_iou);
}

std::vector<std::vector<Detection>> detect(DetectorModel<float>& model, std::span<const Image* const> images,
                                           const DetectConfig& config, const PoseRanges& ranges, int batch_size) {
  config.validate();
  require(batch_size >= 1, "detect: batch_size must be at least 1");
  model.set_training(false);
  std::vector<std::vector<Detection>> out;
  out.reserve(images.size());
  nn::Tensor<float> batch;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(images.size() - start, static_cast<std::size_t>(batch_size));
    images_to_tensor<float>(images.subspan(start, n), model.config().backbone.input_size, batch);
    model.forward(batch);
    for (std::size_t i = 0; i < n; ++i) out.push_back(decode_detections(model, static_cast<int>(i), config, ranges));
  }
  return out;
}

}  // namespace shaftpose
