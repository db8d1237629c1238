#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "../datagen.hpp"
#include "metrics.hpp"

namespace shaftpose {

// A dataset loaded for evaluation. masks[i] is empty when the records carry no mask files.
struct EvalSet {
  std::vector<DatasetRecord> records;
  std::vector<Image> images;
  std::vector<ImageTruths> truths;
  std::vector<std::vector<Mask>> masks;
  bool has_masks = true;
};

EvalSet load_eval_set(const std::filesystem::path& root);

struct EvalReport {
  std::size_t images = 0;
  std::size_t gts = 0;
  std::size_t pose_gts = 0;
  std::size_t detections = 0;
  std::size_t detected = 0;  // gts covered at the IoU threshold
  std::size_t missed = 0;
  double map = 0.0;
  double detected_rate = 0.0;
  PoseErrors pose;
  PoseErrors baseline;  // range-midpoint predictor
  double rerender_iou = 0.0;
  bool has_rerender = false;
};

struct EvalOptions {
  DetectConfig detect;
  double iou_threshold = 0.5;
  PoseRanges ranges;
  CameraModel camera{64, 64, 95.0};
  ShaftGeometry geometry;
};

EvalReport summarize(std::span<const ImageDetections> detections, const EvalSet& set, const EvalOptions& options);
EvalReport evaluate(DetectorModel<float>& model, const EvalSet& set, const EvalOptions& options,
                    std::vector<ImageDetections>* detections_out = nullptr);

std::string report_json(const EvalReport& report);
// Columns: mAP, detected rate, then pose MAE for x, y, z, pitch, yaw.
std::string report_table(const EvalReport& report);
// One line per image: record index, ground truth, detections, and which gts were detected.
std::string per_image_jsonl(const EvalSet& set, std::span<const ImageDetections> detections, double iou_threshold);

std::string detections_json(const ImageDetections& detections);
ImageDetections detections_from_json(const std::string& text);

}  // namespace shaftpose
