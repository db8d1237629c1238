#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "../detector/anchors.hpp"
#include "../error.hpp"

namespace shaftpose {

namespace {

void check_sizes(std::size_t d, std::size_t t) {
  require(d == t, "metrics: detections cover " + std::to_string(d) + " images, ground truth " + std::to_string(t));
}

// Index of the highest-IoU detection for `gt` at IoU >= threshold, or -1.
int best_iou_detection(const ImageDetections& dets, const Box& gt, double threshold) {
  int best = -1;
  double best_iou = 0.0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const double iou = box_iou(dets[i].bbox, gt);
    if (iou >= threshold && (best < 0 || iou > best_iou)) {
      best = static_cast<int>(i);
      best_iou = iou;
    }
  }
  return best;
}

}  // namespace

double average_precision(std::span<const ImageDetections> detections, std::span<const ImageTruths> truths,
                         double iou_threshold) {
  check_sizes(detections.size(), truths.size());
  struct Ranked {
    double score;
    std::size_t image;
    std::size_t pos;
  };
  std::vector<Ranked> ranked;
  std::size_t total_gt = 0;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    total_gt += truths[i].size();
    for (std::size_t j = 0; j < detections[i].size(); ++j) ranked.push_back({detections[i][j].score, i, j});
  }
  if (total_gt == 0) return 0.0;
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  std::vector<std::vector<std::uint8_t>> used(truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) used[i].assign(truths[i].size(), 0);
  std::vector<double> precision, recall;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& det = detections[ranked[r].image][ranked[r].pos];
    const auto& gts = truths[ranked[r].image];
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      const double iou = box_iou(det.bbox, gts[g].bbox);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    // VOC: a detection whose best gt is already taken is a false positive.
    if (best >= 0 && best_iou >= iou_threshold && !used[ranked[r].image][best]) {
      used[ranked[r].image][best] = 1;
      ++tp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }

  for (std::size_t i = precision.size(); i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

double detected_rate(std::span<const ImageDetections> detections, std::span<const ImageTruths> truths,
                     double iou_threshold) {
  check_sizes(detections.size(), truths.size());
  std::size_t total = 0, hit = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    for (const auto& gt : truths[i]) {
      ++total;
      if (best_iou_detection(detections[i], gt.bbox, iou_threshold) >= 0) ++hit;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

PoseErrors pose_error_report(std::span<const ImageDetections> detections, std::span<const ImageTruths> truths,
                             double iou_threshold) {
  check_sizes(detections.size(), truths.size());
  PoseErrors out;
  std::array<double, kPoseDims> sum{};
  for (std::size_t i = 0; i < truths.size(); ++i) {
    for (const auto& gt : truths[i]) {
      if (!gt.pose) continue;
      const int d = best_iou_detection(detections[i], gt.bbox, iou_threshold);
      if (d < 0) {
        ++out.unmatched;
        continue;
      }
      const auto& pred = detections[i][d].pose;
      for (std::size_t p = 0; p < 4; ++p) sum[p] += std::abs(pred[p] - (*gt.pose)[p]);
      sum[4] += yaw_error(pred.yaw, gt.pose->yaw);
      ++out.matched;
    }
  }
  if (out.matched > 0) {
    for (std::size_t p = 0; p < kPoseDims; ++p) out.mae[p] = sum[p] / static_cast<double>(out.matched);
  }
  return out;
}

PoseErrors midpoint_baseline(std::span<const ImageTruths> truths, const PoseRanges& ranges) {
  PoseErrors out;
  std::array<double, kPoseDims> sum{};
  for (const auto& image : truths) {
    for (const auto& gt : image) {
      if (!gt.pose) continue;
      for (std::size_t p = 0; p < 4; ++p) sum[p] += std::abs(ranges.dims[p].mid() - (*gt.pose)[p]);
      sum[4] += yaw_error(ranges.dims[4].mid(), gt.pose->yaw);
      ++out.matched;
    }
  }
  if (out.matched > 0) {
    for (std::size_t p = 0; p < kPoseDims; ++p) out.mae[p] = sum[p] / static_cast<double>(out.matched);
  }
  return out;
}

double normalized_total_mae(const PoseErrors& errors, const PoseRanges& ranges) {
  double total = 0.0;
  for (std::size_t p = 0; p < kPoseDims; ++p) total += errors.mae[p] / ranges.dims[p].width();
  return total;
}

double rerender_iou(std::span<const ImageDetections> detections, std::span<const ImageTruths> truths,
                    std::span<const std::vector<Mask>> masks, const CameraModel& camera, const ShaftGeometry& geometry,
                    double iou_threshold) {
  check_sizes(detections.size(), truths.size());
  check_sizes(masks.size(), truths.size());
  double sum = 0.0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    require(masks[i].size() == truths[i].size(), "rerender_iou: one mask per ground-truth shaft required");
    for (std::size_t g = 0; g < truths[i].size(); ++g) {
      ++total;
      int best = -1;
      for (std::size_t d = 0; d < detections[i].size(); ++d) {
        if (box_iou(detections[i][d].bbox, truths[i][g].bbox) < iou_threshold) continue;
        if (best < 0 || detections[i][d].score > detections[i][best].score) best = static_cast<int>(d);
      }
      if (best < 0) continue;
      sum += mask_iou(render_silhouette(camera, detections[i][best].pose, geometry), masks[i][g]);
    }
  }
  return total == 0 ? 0.0 : sum / static_cast<double>(total);
}

}  // namespace shaftpose
