#include "anchors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../error.hpp"

namespace shaftpose {

double box_iou(const Box& a, const Box& b) {
  if (a.area() <= 0.0 || b.area() <= 0.0) return 0.0;
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::array<double, 4> encode_box(const Box& gt, const Box& anchor) {
  require(anchor.width() > 0.0 && anchor.height() > 0.0, "encode_box: anchor must have positive size");
  require(gt.width() > 0.0 && gt.height() > 0.0, "encode_box: ground-truth box must have positive size");
  const double acx = 0.5 * (anchor.x_min + anchor.x_max), acy = 0.5 * (anchor.y_min + anchor.y_max);
  const double gcx = 0.5 * (gt.x_min + gt.x_max), gcy = 0.5 * (gt.y_min + gt.y_max);
  return {(gcx - acx) / anchor.width(), (gcy - acy) / anchor.height(), std::log(gt.width() / anchor.width()),
          std::log(gt.height() / anchor.height())};
}

Box decode_box(std::span<const double, 4> o, const Box& anchor) {
  const double aw = anchor.width(), ah = anchor.height();
  const double cx = 0.5 * (anchor.x_min + anchor.x_max) + o[0] * aw;
  const double cy = 0.5 * (anchor.y_min + anchor.y_max) + o[1] * ah;
  const double w = aw * std::exp(o[2]), h = ah * std::exp(o[3]);
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

Box decode_box(const std::array<double, 4>& offsets, const Box& anchor) {
  return decode_box(std::span<const double, 4>(offsets), anchor);
}

void AnchorConfig::validate() const {
  if (aspect_ratios.empty()) fail(ErrorCode::kConfig, "anchors: at least one aspect ratio is required");
  for (double r : aspect_ratios) {
    if (!(r > 0.0)) fail(ErrorCode::kConfig, "anchors: aspect ratios must be positive");
  }
  if (!(min_scale > 0.0 && min_scale <= max_scale && max_scale <= 1.0)) {
    fail(ErrorCode::kConfig, "anchors: scales must satisfy 0 < min <= max <= 1");
  }
}

std::size_t AnchorSet::index(const AnchorLocation& loc) const {
  const auto& l = levels.at(loc.level);
  return l.offset + (static_cast<std::size_t>(loc.y) * l.size + loc.x) * l.per_location + loc.box;
}

AnchorLocation AnchorSet::locate(std::size_t index) const {
  for (int k = 0; k < static_cast<int>(levels.size()); ++k) {
    const auto& l = levels[k];
    if (index < l.offset + l.count()) {
      const std::size_t local = index - l.offset;
      const int box = static_cast<int>(local % l.per_location);
      const std::size_t cell = local / l.per_location;
      return {k, static_cast<int>(cell / l.size), static_cast<int>(cell % l.size), box};
    }
  }
  fail(ErrorCode::kInvalidArgument, "anchor index out of range: " + std::to_string(index));
}

AnchorSet build_anchors(int image_size, std::span<const int> level_sizes, const AnchorConfig& config) {
  config.validate();
  require(image_size > 0, "anchors: image size must be positive");
  require(!level_sizes.empty(), "anchors: at least one level is required");
  const int m = static_cast<int>(level_sizes.size());
  const auto scale = [&](int k) {  // k is 0-based; s_{m} (one past the last level) is 1
    if (k >= m) return 1.0;
    if (m == 1) return config.min_scale;
    return config.min_scale + (config.max_scale - config.min_scale) * k / (m - 1.0);
  };

  AnchorSet set;
  set.image_size = image_size;
  const double s_img = image_size;
  for (int k = 0; k < m; ++k) {
    AnchorLevel level{level_sizes[k], config.per_location(), set.boxes.size()};
    require(level.size > 0, "anchors: level sizes must be positive");
    std::vector<std::pair<double, double>> shapes;  // (w, h) in pixels
    for (double r : config.aspect_ratios) {
      shapes.emplace_back(scale(k) * std::sqrt(r) * s_img, scale(k) / std::sqrt(r) * s_img);
    }
    if (config.extra_square) {
      const double s = std::sqrt(scale(k) * scale(k + 1));
      shapes.emplace_back(s * s_img, s * s_img);
    }
    const double cell = s_img / level.size;
    for (int y = 0; y < level.size; ++y) {
      for (int x = 0; x < level.size; ++x) {
        const double cx = (x + 0.5) * cell, cy = (y + 0.5) * cell;
        for (const auto& [w0, h0] : shapes) {
          const double w = std::min(w0, s_img), h = std::min(h0, s_img);
          set.boxes.push_back({cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h});
        }
      }
    }
    set.levels.push_back(level);
  }
  return set;
}

std::size_t MatchResult::positives() const {
  return static_cast<std::size_t>(std::count_if(gt_index.begin(), gt_index.end(), [](int g) { return g >= 0; }));
}

MatchResult match_anchors(std::span<const Box> anchors, std::span<const Box> gts, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, "match_anchors: threshold must lie in (0, 1)");
  MatchResult out;
  out.gt_index.assign(anchors.size(), -1);
  out.iou.assign(anchors.size(), 0.0);
  if (gts.empty()) return out;

  const std::size_t g_count = gts.size();
  std::vector<double> best_anchor_iou(g_count, 0.0);
  std::vector<std::size_t> best_anchor(g_count, anchors.size());
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    int best = -1;
    double best_iou = 0.0;
    for (std::size_t g = 0; g < g_count; ++g) {
      const double iou = box_iou(anchors[a], gts[g]);
      if (best < 0 || iou > best_iou) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
      if (iou > best_anchor_iou[g]) {
        best_anchor_iou[g] = iou;
        best_anchor[g] = a;
      }
    }
    out.iou[a] = best_iou;
    if (best_iou >= threshold) out.gt_index[a] = best;
  }

  std::vector<std::uint8_t> forced(anchors.size(), 0);
  for (std::size_t g = 0; g < g_count; ++g) {
    const std::size_t a = best_anchor[g];
    if (a == anchors.size() || forced[a]) continue;
    forced[a] = 1;
    out.gt_index[a] = static_cast<int>(g);
    out.iou[a] = best_anchor_iou[g];
  }
  return out;
}

std::vector<std::uint8_t> hard_negative_mine(std::span<const double> conf_loss, std::span<const std::uint8_t> positive,
                                             double ratio) {
  require(ratio >= 1.0, "hard_negative_mine: ratio must be at least 1");
  require(conf_loss.size() == positive.size(), "hard_negative_mine: size mismatch");
  std::vector<std::size_t> negatives;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < positive.size(); ++i) {
    if (positive[i]) {
      ++pos;
    } else {
      negatives.push_back(i);
    }
  }
  const auto want = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(std::max<std::size_t>(pos, 1))));
  const std::size_t take = std::min(want, negatives.size());
  std::partial_sort(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(take), negatives.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (conf_loss[a] != conf_loss[b]) return conf_loss[a] > conf_loss[b];
                      return a < b;
                    });
  std::vector<std::uint8_t> selected(positive.size(), 0);
  for (std::size_t i = 0; i < take; ++i) selected[negatives[i]] = 1;
  return selected;
}

std::size_t ImageTargets::positives() const {
  return static_cast<std::size_t>(std::count(positive.begin(), positive.end(), std::uint8_t{1}));
}

ImageTargets build_targets(const AnchorSet& anchors, const MatchResult& matches, std::span<const Box> gts,
                           const std::optional<std::vector<ShaftPose>>& poses, const PoseRanges& ranges,
                           bool require_pose) {
  require(matches.gt_index.size() == anchors.size(), "build_targets: match/anchor size mismatch");
  if (require_pose && !poses) fail(ErrorCode::kInvalidArgument, "build_targets: pose requested for a pose-unlabeled record");
  if (poses) require(poses->size() == gts.size(), "build_targets: pose/box count mismatch");

  ImageTargets t;
  const std::size_t n = anchors.size();
  t.positive.assign(n, 0);
  t.box.assign(n, {0.0, 0.0, 0.0, 0.0});
  if (poses) t.pose.emplace(n, NormalizedPose{});
  for (std::size_t a = 0; a < n; ++a) {
    const int g = matches.gt_index[a];
    if (g < 0) continue;
    t.positive[a] = 1;
    t.box[a] = encode_box(gts[g], anchors.boxes[a]);
    if (poses) (*t.pose)[a] = normalize_pose((*poses)[g], ranges);
  }
  return t;
}

}  // namespace shaftpose
