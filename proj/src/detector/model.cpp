#include "model.hpp"

#include <json.hpp>

#include "../error.hpp"

namespace shaftpose {

const char* variant_name(Variant v) { return v == Variant::kC ? "C" : "D"; }

Variant parse_variant(const std::string& s) {
  if (s == "c" || s == "C") return Variant::kC;
  if (s == "d" || s == "D") return Variant::kD;
  fail(ErrorCode::kConfig, "unknown architecture variant '" + s + "' (expected c or d)");
}

void BackboneConfig::validate() const {
  if (input_size < 2) fail(ErrorCode::kConfig, "backbone: input size must be at least 2");
  if (levels.empty()) fail(ErrorCode::kConfig, "backbone: at least one level is required");
  if (channels < 1 || stem_channels < 1) fail(ErrorCode::kConfig, "backbone: channel counts must be positive");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (levels[i] >= levels[i - 1]) fail(ErrorCode::kConfig, "backbone: level sizes must be strictly decreasing");
  }
  if (levels.back() < 2) fail(ErrorCode::kConfig, "backbone: the last level must be at least 2x2");
  // Every level must lie on the stride-2 chain input -> ceil(input/2) -> ...
  int size = input_size;
  for (int target : levels) {
    while (size > target) size = nn::same_out(size, 2);
    if (size != target) {
      fail(ErrorCode::kConfig, "backbone: level size " + std::to_string(target) +
                                   " is not reachable by stride-2 reductions from " + std::to_string(input_size));
    }
  }
  if (levels.front() == input_size) fail(ErrorCode::kConfig, "backbone: the first level must be downsampled");
}

void ModelConfig::validate() const {
  backbone.validate();
  anchors.validate();
  if (pose_hidden < 1) fail(ErrorCode::kConfig, "model: pose_hidden must be positive");
}

std::string ModelConfig::descriptor() const {
  nlohmann::json j;
  j["variant"] = variant_name(variant);
  j["input_size"] = backbone.input_size;
  j["levels"] = backbone.levels;
  j["channels"] = backbone.channels;
  j["stem_channels"] = backbone.stem_channels;
  j["aspect_ratios"] = anchors.aspect_ratios;
  j["extra_square"] = anchors.extra_square;
  j["min_scale"] = anchors.min_scale;
  j["max_scale"] = anchors.max_scale;
  j["anchors_per_location"] = anchors.per_location();
  j["pose_hidden"] = pose_hidden;
  j["pose_activation"] = pose_tanh ? "tanh" : "linear";
  return j.dump();
}

ModelConfig ModelConfig::from_descriptor(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.backbone.input_size = j.at("input_size").get<int>();
    c.backbone.levels = j.at("levels").get<std::vector<int>>();
    c.backbone.channels = j.at("channels").get<int>();
    c.backbone.stem_channels = j.at("stem_channels").get<int>();
    c.anchors.aspect_ratios = j.at("aspect_ratios").get<std::vector<double>>();
    c.anchors.extra_square = j.at("extra_square").get<bool>();
    c.anchors.min_scale = j.at("min_scale").get<double>();
    c.anchors.max_scale = j.at("max_scale").get<double>();
    c.pose_hidden = j.at("pose_hidden").get<int>();
    c.pose_tanh = j.at("pose_activation").get<std::string>() == "tanh";
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed architecture descriptor: ") + e.what());
  }
}

AnchorSet build_anchors(const ModelConfig& config) {
  return build_anchors(config.backbone.input_size, config.backbone.levels, config.anchors);
}

bool is_pose_parameter(const std::string& name) { return name.find(".pose") != std::string::npos; }

template <typename T>
DetectorModel<T>::DetectorModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  anchors_ = build_anchors(config_);
  const auto& bb = config_.backbone;
  const int c = bb.channels;
  const int na = config_.anchors.per_location();

  // Stem: stride-2 blocks down to the first level, then one stride-1 refinement block.
  int size = bb.input_size;
  int in_ch = 3;
  while (size > bb.levels.front()) {
    size = nn::same_out(size, 2);
    const int out_ch = size == bb.levels.front() ? c : bb.stem_channels;
    stem_.push_back(std::make_unique<ConvBnRelu<T>>(in_ch, out_ch, 2));
    in_ch = out_ch;
  }
  level_blocks_.resize(bb.levels.size());
  level_blocks_[0].push_back(std::make_unique<ConvBnRelu<T>>(c, c, 1));
  for (std::size_t k = 1; k < bb.levels.size(); ++k) {
    while (size > bb.levels[k]) {
      size = nn::same_out(size, 2);
      level_blocks_[k].push_back(std::make_unique<ConvBnRelu<T>>(c, c, 2));
    }
  }

  for (std::size_t k = 0; k < bb.levels.size(); ++k) {
    auto h = std::make_unique<Head>();
    h->cls = nn::Conv2d<T>(c, kNumClasses * na, 3, 1);
    h->box = nn::Conv2d<T>(c, kBoxDims * na, 3, 1);
    if (config_.variant == Variant::kC) {
      h->pose = nn::Conv2d<T>(c, static_cast<int>(kPoseDims) * na, 3, 1);
    } else {
      h->fuse = std::make_unique<ConvBnRelu<T>>(c + (kNumClasses + kBoxDims) * na, config_.pose_hidden, 1);
      h->pose = nn::Conv2d<T>(config_.pose_hidden, static_cast<int>(kPoseDims) * na, 3, 1);
    }
    heads_.push_back(std::move(h));
  }

  // Initialisation order keeps backbone, class and box weights identical across variants.
  Rng rng(seed);
  for (auto& b : stem_) b->conv.init(rng);
  for (auto& lv : level_blocks_) {
    for (auto& b : lv) b->conv.init(rng);
  }
  for (auto& h : heads_) h->cls.init(rng);
  for (auto& h : heads_) h->box.init(rng);
  for (auto& h : heads_) {
    if (h->fuse) h->fuse->conv.init(rng);
    h->pose.init(rng);
  }
  collect_activations();
}

template <typename T>
void DetectorModel<T>::collect_activations() {
  const auto add_block = [&](ConvBnRelu<T>& b) {
    activations_.push_back(&b.conv_out);
    activations_.push_back(&b.bn_out);
    activations_.push_back(&b.out);
  };
  for (auto& b : stem_) add_block(*b);
  for (auto& lv : level_blocks_) {
    for (auto& b : lv) add_block(*b);
  }
  for (auto& h : heads_) {
    activations_.push_back(&h->cls_out);
    activations_.push_back(&h->box_out);
    activations_.push_back(&h->concat_out);
    if (h->fuse) add_block(*h->fuse);
    activations_.push_back(&h->pose_pre);
    activations_.push_back(&h->pose_out);
  }
}

template <typename T>
void DetectorModel<T>::set_training(bool training) {
  training_ = training;
  for (auto& b : stem_) b->bn.set_training(training);
  for (auto& lv : level_blocks_) {
    for (auto& b : lv) b->bn.set_training(training);
  }
  for (auto& h : heads_) {
    if (h->fuse) h->fuse->bn.set_training(training);
  }
}

template <typename T>
const nn::Tensor<T>& DetectorModel<T>::features(std::size_t level) const {
  return level_blocks_[level].back()->out;
}

template <typename T>
nn::Tensor<T>& DetectorModel<T>::features(std::size_t level) {
  return level_blocks_[level].back()->out;
}

template <typename T>
void DetectorModel<T>::forward(const nn::Tensor<T>& images) {
  const auto s = images.shape();
  const int in_size = config_.backbone.input_size;
  if (s.h != in_size || s.w != in_size || s.c != 3) {
    fail(ErrorCode::kInvalidArgument, "model input must be (N," + std::to_string(in_size) + "," +
                                          std::to_string(in_size) + ",3), got " + s.str());
  }
  input_ = &images;
  const nn::Tensor<T>* x = &images;
  for (auto& b : stem_) {
    b->forward(*x);
    x = &b->out;
  }
  for (std::size_t k = 0; k < level_blocks_.size(); ++k) {
    for (auto& b : level_blocks_[k]) {
      b->forward(*x);
      x = &b->out;
    }
  }
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    auto& h = *heads_[k];
    const auto& f = features(k);
    h.cls.forward(f, h.cls_out);
    h.box.forward(f, h.box_out);
    if (h.fuse) {
      const nn::Tensor<T>* parts[] = {&f, &h.cls_out, &h.box_out};
      h.concat.forward(parts, h.concat_out);
      h.fuse->forward(h.concat_out);
      h.pose.forward(h.fuse->out, h.pose_pre);
    } else {
      h.pose.forward(f, h.pose_pre);
    }
    if (config_.pose_tanh) {
      h.tanh.forward(h.pose_pre, h.pose_out);
    } else {
      h.pose_out.reshape(h.pose_pre.shape());
      std::copy(h.pose_pre.values().begin(), h.pose_pre.values().end(), h.pose_out.values().begin());
    }
  }
}

template <typename T>
LevelOutputs<T> DetectorModel<T>::outputs(std::size_t level) const {
  const auto& h = *heads_.at(level);
  return {&h.cls_out, &h.box_out, &h.pose_out};
}

template <typename T>
nn::Tensor<T>& DetectorModel<T>::cls_map(std::size_t level) {
  return heads_.at(level)->cls_out;
}
template <typename T>
nn::Tensor<T>& DetectorModel<T>::box_map(std::size_t level) {
  return heads_.at(level)->box_out;
}
template <typename T>
nn::Tensor<T>& DetectorModel<T>::pose_map(std::size_t level) {
  return heads_.at(level)->pose_out;
}

template <typename T>
void DetectorModel<T>::zero_grad() {
  for (auto* a : activations_) a->zero_grad();
  for (auto& p : parameters()) p.tensor->zero_grad();
}

template <typename T>
void DetectorModel<T>::backward() {
  require(input_ != nullptr, "backward called before forward");
  for (std::size_t k = heads_.size(); k-- > 0;) {
    auto& h = *heads_[k];
    auto& f = features(k);
    if (config_.pose_tanh) {
      h.tanh.backward(h.pose_pre, h.pose_out);
    } else {
      for (std::size_t i = 0; i < h.pose_pre.size(); ++i) h.pose_pre.grad()[i] += h.pose_out.grad()[i];
    }
    if (h.fuse) {
      h.pose.backward(h.fuse->out, h.pose_pre);
      h.fuse->backward(h.concat_out, true);
      nn::Tensor<T>* parts[] = {&f, &h.cls_out, &h.box_out};
      h.concat.backward(parts, h.concat_out);
    } else {
      h.pose.backward(f, h.pose_pre);
    }
    h.cls.backward(f, h.cls_out);
    h.box.backward(f, h.box_out);

    // Level k's blocks read the previous level's features (or the stem output for k == 0).
    auto& blocks = level_blocks_[k];
    for (std::size_t b = blocks.size(); b-- > 0;) {
      nn::Tensor<T>& in = b > 0 ? blocks[b - 1]->out : (k > 0 ? features(k - 1) : stem_.back()->out);
      blocks[b]->backward(in, true);
    }
  }
  for (std::size_t b = stem_.size(); b-- > 0;) {
    if (b > 0) {
      stem_[b]->backward(stem_[b - 1]->out, true);
    } else {
      // Input images need no gradient.
      stem_[0]->backward(const_cast<nn::Tensor<T>&>(*input_), false);
    }
  }
}

template <typename T>
std::vector<NamedTensor<T>> DetectorModel<T>::parameters() {
  std::vector<NamedTensor<T>> out;
  const auto add_block = [&](const std::string& prefix, ConvBnRelu<T>& b) {
    out.push_back({prefix + ".conv.weight", &b.conv.weight()});
    out.push_back({prefix + ".bn.gamma", &b.bn.gamma()});
    out.push_back({prefix + ".bn.beta", &b.bn.beta()});
  };
  const auto add_conv = [&](const std::string& prefix, nn::Conv2d<T>& c) {
    out.push_back({prefix + ".weight", &c.weight()});
    if (c.has_bias()) out.push_back({prefix + ".bias", &c.bias()});
  };
  for (std::size_t i = 0; i < stem_.size(); ++i) add_block("backbone.stem" + std::to_string(i), *stem_[i]);
  for (std::size_t k = 0; k < level_blocks_.size(); ++k) {
    for (std::size_t i = 0; i < level_blocks_[k].size(); ++i) {
      add_block("backbone.level" + std::to_string(k) + ".block" + std::to_string(i), *level_blocks_[k][i]);
    }
  }
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const std::string p = "head" + std::to_string(k);
    add_conv(p + ".cls", heads_[k]->cls);
    add_conv(p + ".box", heads_[k]->box);
    if (heads_[k]->fuse) add_block(p + ".pose_fuse", *heads_[k]->fuse);
    add_conv(p + ".pose", heads_[k]->pose);
  }
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> DetectorModel<T>::buffers() {
  std::vector<NamedTensor<T>> out;
  const auto add_block = [&](const std::string& prefix, ConvBnRelu<T>& b) {
    out.push_back({prefix + ".bn.running_mean", &b.bn.running_mean()});
    out.push_back({prefix + ".bn.running_var", &b.bn.running_var()});
  };
  for (std::size_t i = 0; i < stem_.size(); ++i) add_block("backbone.stem" + std::to_string(i), *stem_[i]);
  for (std::size_t k = 0; k < level_blocks_.size(); ++k) {
    for (std::size_t i = 0; i < level_blocks_[k].size(); ++i) {
      add_block("backbone.level" + std::to_string(k) + ".block" + std::to_string(i), *level_blocks_[k][i]);
    }
  }
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    if (heads_[k]->fuse) add_block("head" + std::to_string(k) + ".pose_fuse", *heads_[k]->fuse);
  }
  return out;
}

template class DetectorModel<float>;
template class DetectorModel<double>;

}  // namespace shaftpose
