#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "gradcheck_suite.hpp"

namespace shaftpose {

namespace fs = std::filesystem;

// Writes `text` to `path`, creating parent directories.
void write_text_file(const fs::path& path, const std::string& text);
std::string read_text_file(const fs::path& path);

struct GenDataSummary {
  std::size_t count = 0;
  std::size_t pose_stripped = 0;
  std::size_t two_shaft = 0;
  std::size_t occluded = 0;
};

// Records start_index .. start_index + count - 1 into `out`, plus summary.json and config.json.
GenDataSummary cmd_gen_data(const RunConfig& config, const fs::path& out, std::uint64_t start_index = 0);

struct TrainOptions {
  std::vector<fs::path> datasets;  // concatenated in order
  fs::path out;
  std::optional<fs::path> resume;
  std::int64_t stop_after_step = -1;  // stop early (the schedule still spans train.steps)
  std::function<void(const StepRecord&)> on_step;
};

// Writes config.json, loss.jsonl, checkpoints/step_NNNNNN.ckpt and model.ckpt into options.out.
// Returns the number of completed steps.
std::int64_t cmd_train(const RunConfig& config, const TrainOptions& options);

// Writes report.json, report.txt, per_image.jsonl and config.json into `out`.
EvalReport cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& dataset, const fs::path& out);

struct InferOptions {
  std::optional<fs::path> checkpoint;
  fs::path image;
  fs::path out;
  std::optional<std::vector<ShaftPose>> pose_override;  // skip the model, draw these poses
  bool resize = false;
};

// Writes detections.json and overlay.png into options.out.
ImageDetections cmd_infer(const RunConfig& config, const InferOptions& options);

std::vector<ShaftPose> parse_pose_list(const std::string& json_text);

// Silhouette contour (set pixels with an unset 4-neighbour or on the frame edge) and box
// outlines drawn over `image`. Boxes first, contours on top.
inline constexpr std::uint8_t kContourColor[3] = {0, 255, 0};
inline constexpr std::uint8_t kBoxColor[3] = {255, 255, 0};
Image draw_overlay(const Image& image, const ImageDetections& detections, const CameraModel& camera,
                   const ShaftGeometry& geometry);
Mask mask_contour(const Mask& mask);

Image resize_nearest(const Image& image, int width, int height);

}  // namespace shaftpose
