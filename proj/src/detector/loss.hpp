#pragma once

#include <array>
#include <span>
#include <vector>

#include "../nn/losses.hpp"
#include "anchors.hpp"
#include "model.hpp"

namespace shaftpose {

struct LossConfig {
  double alpha = 1.5;
  std::array<double, kPoseDims> beta{1.0, 1.0, 2.0, 2.0, 2.0};  // x, y, z, pitch, yaw
  double gamma = 5.0;
  double neg_pos_ratio = 3.0;
  // Literal reading: supervise the pose map of every anchor (negatives towards 0).
  bool pose_on_negatives = false;

  void validate() const;
};

// Raw term sums; total = (conf + alpha * bbox + pose) / n with n = max(#matched anchors, 1).
struct LossBreakdown {
  double conf = 0.0;
  double bbox = 0.0;
  double pose = 0.0;
  std::size_t n = 1;
  std::size_t positives = 0;
  double total = 0.0;
};

// Mutable views of the head maps of a batch; gradients are accumulated into them.
template <typename T>
struct HeadMaps {
  std::vector<nn::Tensor<T>*> cls, box, pose;
};

template <typename T>
HeadMaps<T> head_maps(DetectorModel<T>& model) {
  HeadMaps<T> m;
  for (std::size_t k = 0; k < model.levels(); ++k) {
    m.cls.push_back(&model.cls_map(k));
    m.box.push_back(&model.box_map(k));
    m.pose.push_back(&model.pose_map(k));
  }
  return m;
}

// Channel offset helper: flat value index of (item, anchor, component) in a level map.
struct AnchorAddress {
  int level;
  std::size_t cell;  // y * size + x
  int box;
};
std::vector<AnchorAddress> anchor_addresses(const AnchorSet& anchors);

template <typename T>
std::size_t map_index(const nn::Tensor<T>& map, int item, const AnchorAddress& a, int per_box, int component) {
  const auto& s = map.shape();
  return (static_cast<std::size_t>(item) * s.h * s.w + a.cell) * s.c + static_cast<std::size_t>(a.box) * per_box + component;
}

// Composite detection loss over a batch; targets[i] belongs to batch item i. When `write_grad`
// is set, dL/d(map) is added to the maps' gradient buffers.
template <typename T>
LossBreakdown total_loss(const AnchorSet& anchors, HeadMaps<T>& maps, std::span<const ImageTargets> targets,
                         const LossConfig& config, bool write_grad) {
  const auto addr = anchor_addresses(anchors);
  const std::size_t na = anchors.size();
  LossBreakdown out;

  std::vector<double> logits(na * kNumClasses), one_hot(na * kNumClasses), conf_loss(na);
  std::vector<std::uint8_t> all(na, 1);
  std::vector<std::vector<std::uint8_t>> selected(targets.size());

  for (std::size_t b = 0; b < targets.size(); ++b) {
    const auto& t = targets[b];
    require(t.positive.size() == na, "total_loss: target/anchor size mismatch");
    for (std::size_t a = 0; a < na; ++a) {
      const auto& cls = *maps.cls[addr[a].level];
      for (int c = 0; c < kNumClasses; ++c) {
        logits[a * kNumClasses + c] = cls[map_index(cls, static_cast<int>(b), addr[a], kNumClasses, c)];
        one_hot[a * kNumClasses + c] = (c == 1) == (t.positive[a] != 0) ? 1.0 : 0.0;
      }
    }
    nn::softmax_cross_entropy<double>(logits, one_hot, all, kNumClasses, conf_loss);
    auto& sel = selected[b];
    sel = hard_negative_mine(conf_loss, t.positive, config.neg_pos_ratio);
    for (std::size_t a = 0; a < na; ++a) {
      if (t.positive[a]) {
        sel[a] = 1;
        ++out.positives;
      }
      if (sel[a]) out.conf += conf_loss[a];
    }

    for (std::size_t a = 0; a < na; ++a) {
      if (!t.positive[a]) continue;
      const auto& box = *maps.box[addr[a].level];
      for (int d = 0; d < kBoxDims; ++d) {
        out.bbox += nn::smooth_l1<double>(box[map_index(box, static_cast<int>(b), addr[a], kBoxDims, d)] - t.box[a][d]);
      }
    }

    if (t.pose) {
      for (std::size_t a = 0; a < na; ++a) {
        if (!t.positive[a] && !config.pose_on_negatives) continue;
        const auto& pose = *maps.pose[addr[a].level];
        for (std::size_t p = 0; p < kPoseDims; ++p) {
          const double pred = pose[map_index(pose, static_cast<int>(b), addr[a], kPoseDims, static_cast<int>(p))];
          out.pose += config.beta[p] * nn::smooth_l1<double>(config.gamma * (pred - (*t.pose)[a][p]));
        }
      }
    }
  }

  out.n = std::max<std::size_t>(out.positives, 1);
  out.total = (out.conf + config.alpha * out.bbox + out.pose) / static_cast<double>(out.n);
  if (!std::isfinite(out.total)) {
    fail(ErrorCode::kNumeric, "non-finite loss (conf=" + std::to_string(out.conf) + ", bbox=" +
                                  std::to_string(out.bbox) + ", pose=" + std::to_string(out.pose) + ")");
  }
  if (!write_grad) return out;

  const double inv_n = 1.0 / static_cast<double>(out.n);
  std::vector<double> weight(na), dlogits(na * kNumClasses);
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const auto& t = targets[b];
    const int item = static_cast<int>(b);
    for (std::size_t a = 0; a < na; ++a) {
      auto& cls = *maps.cls[addr[a].level];
      for (int c = 0; c < kNumClasses; ++c) {
        logits[a * kNumClasses + c] = cls[map_index(cls, item, addr[a], kNumClasses, c)];
        one_hot[a * kNumClasses + c] = (c == 1) == (t.positive[a] != 0) ? 1.0 : 0.0;
      }
      weight[a] = selected[b][a] ? inv_n : 0.0;
    }
    std::fill(dlogits.begin(), dlogits.end(), 0.0);
    nn::softmax_cross_entropy_backward<double>(logits, one_hot, weight, kNumClasses, dlogits);
    for (std::size_t a = 0; a < na; ++a) {
      if (weight[a] == 0.0) continue;
      auto& cls = *maps.cls[addr[a].level];
      for (int c = 0; c < kNumClasses; ++c) {
        cls.grad()[map_index(cls, item, addr[a], kNumClasses, c)] += static_cast<T>(dlogits[a * kNumClasses + c]);
      }
    }

    for (std::size_t a = 0; a < na; ++a) {
      if (!t.positive[a]) continue;
      auto& box = *maps.box[addr[a].level];
      for (int d = 0; d < kBoxDims; ++d) {
        const std::size_t i = map_index(box, item, addr[a], kBoxDims, d);
        box.grad()[i] += static_cast<T>(config.alpha * inv_n * nn::smooth_l1_grad<double>(box[i] - t.box[a][d]));
      }
    }

    if (!t.pose) continue;  // loss switching: no pose gradient for unlabeled items
    for (std::size_t a = 0; a < na; ++a) {
      if (!t.positive[a] && !config.pose_on_negatives) continue;
      auto& pose = *maps.pose[addr[a].level];
      for (std::size_t p = 0; p < kPoseDims; ++p) {
        const std::size_t i = map_index(pose, item, addr[a], kPoseDims, static_cast<int>(p));
        const double r = config.gamma * (pose[i] - (*t.pose)[a][p]);
        pose.grad()[i] += static_cast<T>(inv_n * config.beta[p] * config.gamma * nn::smooth_l1_grad<double>(r));
      }
    }
  }
  return out;
}

// gamma * (pred - target) for every supervised (item, anchor, dimension), in batch/anchor/dim order.
template <typename T>
std::vector<double> pose_residuals(const AnchorSet& anchors, HeadMaps<T>& maps, std::span<const ImageTargets> targets,
                                   const LossConfig& config) {
  const auto addr = anchor_addresses(anchors);
  std::vector<double> out;
  for (std::size_t b = 0; b < targets.size(); ++b) {
    const auto& t = targets[b];
    if (!t.pose) continue;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      if (!t.positive[a] && !config.pose_on_negatives) continue;
      const auto& pose = *maps.pose[addr[a].level];
      for (std::size_t p = 0; p < kPoseDims; ++p) {
        const double pred = pose[map_index(pose, static_cast<int>(b), addr[a], kPoseDims, static_cast<int>(p))];
        out.push_back(config.gamma * (pred - (*t.pose)[a][p]));
      }
    }
  }
  return out;
}

}  // namespace shaftpose
