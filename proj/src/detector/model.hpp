#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "../nn/layers.hpp"
#include "anchors.hpp"

namespace shaftpose {

inline constexpr int kNumClasses = 2;  // background, instrument
inline constexpr int kBoxDims = 4;

enum class Variant { kC, kD };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct BackboneConfig {
  int input_size = 64;
  std::vector<int> levels{16, 8, 4, 2};
  int channels = 32;
  int stem_channels = 16;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

struct ModelConfig {
  BackboneConfig backbone;
  AnchorConfig anchors;
  Variant variant = Variant::kD;
  int pose_hidden = 32;   // channels of the fused pose path (variant D)
  bool pose_tanh = true;  // false: linear pose output

  void validate() const;
  // Compact JSON architecture descriptor, embedded in checkpoints.
  std::string descriptor() const;
  static ModelConfig from_descriptor(const std::string& json_text);
  bool operator==(const ModelConfig&) const = default;
};

AnchorSet build_anchors(const ModelConfig& config);

template <typename T>
struct NamedTensor {
  std::string name;
  nn::Tensor<T>* tensor;
};

// Conv (no bias) -> batchnorm -> relu.
template <typename T>
struct ConvBnRelu {
  nn::Conv2d<T> conv;
  nn::BatchNorm<T> bn;
  nn::Relu<T> relu;
  nn::Tensor<T> conv_out, bn_out, out;

  ConvBnRelu(int in, int out_channels, int stride) : conv(in, out_channels, 3, stride, false), bn(out_channels) {}
  void forward(const nn::Tensor<T>& in) {
    conv.forward(in, conv_out);
    bn.forward(conv_out, bn_out);
    relu.forward(bn_out, out);
  }
  void backward(nn::Tensor<T>& in, bool propagate) {
    relu.backward(bn_out, out);
    bn.backward(conv_out, bn_out);
    conv.backward(in, conv_out, propagate);
  }
};

// Head maps of one pyramid level, NHWC with per-location channel groups ordered by anchor box:
// cls (2 per box), box (4 per box), pose (5 per box, normalised).
template <typename T>
struct LevelOutputs {
  const nn::Tensor<T>* cls;
  const nn::Tensor<T>* box;
  const nn::Tensor<T>* pose;
};

template <typename T>
class DetectorModel {
 public:
  DetectorModel(const ModelConfig& config, std::uint64_t seed);
  DetectorModel(const DetectorModel&) = delete;
  DetectorModel& operator=(const DetectorModel&) = delete;

  const ModelConfig& config() const { return config_; }
  const AnchorSet& anchors() const { return anchors_; }

  void set_training(bool training);
  bool training() const { return training_; }

  // images: {N, S, S, 3}, already normalised.
  void forward(const nn::Tensor<T>& images);
  std::size_t levels() const { return heads_.size(); }
  LevelOutputs<T> outputs(std::size_t level) const;
  // Gradient buffers of the head maps; the loss writes into these after zero_grad().
  nn::Tensor<T>& cls_map(std::size_t level);
  nn::Tensor<T>& box_map(std::size_t level);
  nn::Tensor<T>& pose_map(std::size_t level);

  // Clears every parameter and activation gradient.
  void zero_grad();
  // Back-propagates the gradients currently held by the head maps.
  void backward();

  std::vector<NamedTensor<T>> parameters();
  std::vector<NamedTensor<T>> buffers();

 private:
  struct Head {
    nn::Conv2d<T> cls, box;
    nn::Tensor<T> cls_out, box_out;
    // Variant C: pose conv straight from the features. Variant D: concat(features, cls, box)
    // -> conv/bn/relu -> conv.
    nn::ConcatChannels<T> concat;
    nn::Tensor<T> concat_out;
    std::unique_ptr<ConvBnRelu<T>> fuse;
    nn::Conv2d<T> pose;
    nn::Tensor<T> pose_pre;
    nn::Tanh<T> tanh;
    nn::Tensor<T> pose_out;
  };

  const nn::Tensor<T>& features(std::size_t level) const;
  nn::Tensor<T>& features(std::size_t level);
  void collect_activations();

  ModelConfig config_;
  AnchorSet anchors_;
  bool training_ = true;
  const nn::Tensor<T>* input_ = nullptr;
  std::vector<std::unique_ptr<ConvBnRelu<T>>> stem_;
  std::vector<std::vector<std::unique_ptr<ConvBnRelu<T>>>> level_blocks_;
  std::vector<std::unique_ptr<Head>> heads_;
  std::vector<nn::Tensor<T>*> activations_;
};

extern template class DetectorModel<float>;
extern template class DetectorModel<double>;

// Copies parameters and buffers by name; names missing from `src` are left untouched.
template <typename Dst, typename Src>
void copy_weights(DetectorModel<Dst>& dst, DetectorModel<Src>& src) {
  auto from = src.parameters();
  auto fb = src.buffers();
  from.insert(from.end(), fb.begin(), fb.end());
  auto to = dst.parameters();
  auto tb = dst.buffers();
  to.insert(to.end(), tb.begin(), tb.end());
  for (auto& t : to) {
    for (auto& f : from) {
      if (f.name == t.name && f.tensor->size() == t.tensor->size()) {
        for (std::size_t i = 0; i < t.tensor->size(); ++i) (*t.tensor)[i] = static_cast<Dst>((*f.tensor)[i]);
      }
    }
  }
}

// Parameters belonging to the pose branch (names containing ".pose").
bool is_pose_parameter(const std::string& name);

}  // namespace shaftpose
