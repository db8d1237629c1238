#include "trainer.hpp"

#include <numeric>

#include "../error.hpp"
#include "../rng.hpp"
#include "checkpoint.hpp"

namespace shaftpose {

template <typename T>
void images_to_tensor(std::span<const Image* const> images, int size, nn::Tensor<T>& out) {
  out.reshape({static_cast<int>(images.size()), size, size, 3});
  T* dst = out.data();
  for (const Image* img : images) {
    if (img->width != size || img->height != size || img->channels != 3) {
      fail(ErrorCode::kInvalidArgument, "image is " + std::to_string(img->width) + "x" + std::to_string(img->height) +
                                            "x" + std::to_string(img->channels) + ", model expects " +
                                            std::to_string(size) + "x" + std::to_string(size) + "x3");
    }
    for (const std::uint8_t p : img->pixels) *dst++ = (static_cast<T>(p) - T(kPixelMean)) * T(kPixelScale);
  }
}

template void images_to_tensor<float>(std::span<const Image* const>, int, nn::Tensor<float>&);
template void images_to_tensor<double>(std::span<const Image* const>, int, nn::Tensor<double>&);

TrainItem make_train_item(Image image, const DatasetRecord& record, const AnchorSet& anchors, const PoseRanges& ranges,
                          double match_threshold) {
  TrainItem item;
  item.image = std::move(image);
  for (const auto& s : record.shafts) item.boxes.push_back(s.bbox);
  if (record.pose_labeled()) {
    std::vector<ShaftPose> poses;
    for (const auto& s : record.shafts) poses.push_back(*s.pose);
    item.poses = std::move(poses);
  }
  const auto matches = match_anchors(anchors.boxes, item.boxes, match_threshold);
  item.targets = build_targets(anchors, matches, item.boxes, item.poses, ranges);
  return item;
}

std::vector<TrainItem> load_train_items(const std::filesystem::path& root, const AnchorSet& anchors,
                                        const PoseRanges& ranges, double match_threshold) {
  const auto records = read_dataset(root);
  std::vector<TrainItem> items;
  items.reserve(records.size());
  for (const auto& r : records) {
    items.push_back(make_train_item(read_png(root / r.image_path), r, anchors, ranges, match_threshold));
  }
  return items;
}

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  augmentation.validate();
  if (batch_size < 1) fail(ErrorCode::kConfig, "train: batch_size must be at least 1");
  if (schedule.total_steps < 1) fail(ErrorCode::kConfig, "train: total_steps must be at least 1");
  if (!(schedule.base_lr > 0.0)) fail(ErrorCode::kConfig, "train: base_lr must be positive");
}

Trainer::Trainer(const TrainConfig& config, std::shared_ptr<const std::vector<TrainItem>> data)
    : config_(config), data_(std::move(data)), model_(config.model, mix_seed(config.seed, 0x6d6f64656cULL)) {
  config_.validate();
  require(data_ && !data_->empty(), "trainer: empty training set");
  const std::size_t na = model_.anchors().size();
  for (const auto& item : *data_) {
    require(item.targets.positive.size() == na, "trainer: targets were built for a different anchor layout");
  }
}

const std::vector<std::size_t>& Trainer::epoch_order(std::int64_t epoch) const {
  if (epoch != cached_epoch_) {
    cached_order_.resize(data_->size());
    std::iota(cached_order_.begin(), cached_order_.end(), std::size_t{0});
    Rng rng(mix_seed(config_.seed, 0x65706f6368ULL, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = cached_order_.size(); i > 1; --i) std::swap(cached_order_[i - 1], cached_order_[rng.below(i)]);
    cached_epoch_ = epoch;
  }
  return cached_order_;
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t s) const {
  const auto n = static_cast<std::int64_t>(data_->size());
  std::vector<std::size_t> out;
  out.reserve(config_.batch_size);
  for (int j = 0; j < config_.batch_size; ++j) {
    const std::int64_t flat = s * config_.batch_size + j;
    out.push_back(epoch_order(flat / n)[static_cast<std::size_t>(flat % n)]);
  }
  return out;
}

StepRecord Trainer::step() {
  const auto idx = batch_indices(step_);
  std::vector<Image> augmented;
  std::vector<const Image*> images;
  std::vector<ImageTargets> targets;
  augmented.reserve(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    const auto& item = (*data_)[idx[j]];
    if (config_.augment) {
      Rng rng(mix_seed(config_.seed, static_cast<std::uint64_t>(step_), j));
      augmented.push_back(augment(item.image, rng, config_.augmentation));
      images.push_back(&augmented.back());
    } else {
      images.push_back(&item.image);
    }
    targets.push_back(item.targets);
  }
  images_to_tensor<float>(images, config_.model.backbone.input_size, batch_);

  StepRecord rec;
  rec.lr = nn::poly_decay_lr(step_, config_.schedule);
  try {
    model_.set_training(true);
    model_.forward(batch_);
    model_.zero_grad();
    auto maps = head_maps(model_);
    rec.loss = total_loss<float>(model_.anchors(), maps, targets, config_.loss, true);
    model_.backward();
    auto params = model_.parameters();
    std::vector<nn::Tensor<float>*> tensors;
    for (auto& p : params) tensors.push_back(p.tensor);
    nn::adam_step<float>(tensors, adam_, rec.lr);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNumeric) throw;
    fail(ErrorCode::kNumeric, "training step " + std::to_string(step_ + 1) + " (lr " + std::to_string(rec.lr) +
                                  "): " + e.what());
  }
  ++step_;
  rec.step = step_;
  return rec;
}

void Trainer::save(const std::filesystem::path& path) { write_checkpoint(path, model_, &adam_, step_); }

void Trainer::resume(const std::filesystem::path& path) {
  const auto ck = read_checkpoint(path);
  load_weights(model_, ck);
  if (!load_adam(model_, ck, adam_)) {
    fail(ErrorCode::kSchema, "checkpoint '" + path.string() + "' has no optimizer state to resume from");
  }
  step_ = ck.step;
}

}  // namespace shaftpose
