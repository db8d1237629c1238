#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "../datagen.hpp"
#include "../nn/optim.hpp"
#include "loss.hpp"
#include "model.hpp"

namespace shaftpose {

// Input scaling applied to 8-bit pixels before the network.
inline constexpr float kPixelMean = 127.5f;
inline constexpr float kPixelScale = 1.0f / 64.0f;

// Packs images (all the model's input size, RGB) into a normalised NHWC batch.
template <typename T>
void images_to_tensor(std::span<const Image* const> images, int size, nn::Tensor<T>& out);

struct TrainItem {
  Image image;
  std::vector<Box> boxes;
  std::optional<std::vector<ShaftPose>> poses;
  ImageTargets targets;
};

TrainItem make_train_item(Image image, const DatasetRecord& record, const AnchorSet& anchors, const PoseRanges& ranges,
                          double match_threshold);
std::vector<TrainItem> load_train_items(const std::filesystem::path& root, const AnchorSet& anchors,
                                        const PoseRanges& ranges, double match_threshold);

struct TrainConfig {
  ModelConfig model;
  LossConfig loss;
  nn::LrSchedule schedule;
  int batch_size = 32;
  std::uint64_t seed = 1;
  bool augment = true;
  AugmentationConfig augmentation;

  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;  // 1-based index of the completed step
  double lr = 0.0;
  LossBreakdown loss;
};

// Deterministic mini-batch trainer. Batch composition depends on (seed, step) only, and the
// augmentation of slot j at step s on (seed, s, j), so a resumed run replays the same stream.
class Trainer {
 public:
  Trainer(const TrainConfig& config, std::shared_ptr<const std::vector<TrainItem>> data);

  StepRecord step();
  std::int64_t steps_done() const { return step_; }
  const TrainConfig& config() const { return config_; }
  DetectorModel<float>& model() { return model_; }
  const nn::AdamState<float>& optimizer() const { return adam_; }

  void save(const std::filesystem::path& path);
  // Restores weights, optimizer moments and the step counter.
  void resume(const std::filesystem::path& path);

  // Dataset indices of the batch used at 0-based step `s`.
  std::vector<std::size_t> batch_indices(std::int64_t s) const;

 private:
  const std::vector<std::size_t>& epoch_order(std::int64_t epoch) const;

  TrainConfig config_;
  std::shared_ptr<const std::vector<TrainItem>> data_;
  DetectorModel<float> model_;
  nn::AdamState<float> adam_;
  std::int64_t step_ = 0;
  nn::Tensor<float> batch_;
  mutable std::int64_t cached_epoch_ = -1;
  mutable std::vector<std::size_t> cached_order_;
};

}  // namespace shaftpose
