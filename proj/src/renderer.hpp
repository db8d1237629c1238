#pragma once

#include <optional>
#include <span>
#include <vector>

#include "geometry.hpp"
#include "image.hpp"

namespace shaftpose {

enum class TipStyle { kFlat, kHemisphere };

struct ShaftGeometry {
  double radius = 1.75;
  double length = 100.0;
  TipStyle tip = TipStyle::kHemisphere;

  void validate() const;
};

// Per-shaft results are indexed like the input poses.
//   masks:       visible pixels after occlusion (nearest hit wins)
//   silhouettes: each shaft rendered alone, i.e. render_silhouette(pose)
//   boxes:       mask_to_bbox(silhouette), absent when the silhouette is empty
struct RenderedSample {
  Image image;
  std::vector<Mask> masks;
  std::vector<Mask> silhouettes;
  std::vector<std::optional<Box>> boxes;
};

// Near clipping plane in millimetres; geometry with z below it is not rendered.
inline constexpr double kNearPlane = 1e-3;

// Entry distance along the ray `dir` (from the camera origin) into the shaft solid, if any.
struct RayHit {
  double distance;
  Vec3 normal;
};
std::optional<RayHit> intersect_shaft(const Vec3& dir, const ShaftPose& pose, const ShaftGeometry& geom);

// Shortest distance from the camera origin to the shaft surface; negative when the
// camera sits inside the shaft.
double camera_clearance(const ShaftPose& pose, const ShaftGeometry& geom);

RenderedSample rasterize_scene(const CameraModel& camera, std::span<const ShaftPose> poses,
                               const ShaftGeometry& geom, double light_intensity, const Image& background);

RenderedSample rasterize_shaft(const CameraModel& camera, const ShaftPose& pose, const ShaftGeometry& geom,
                               double light_intensity, const Image& background);

Mask render_silhouette(const CameraModel& camera, const ShaftPose& pose, const ShaftGeometry& geom);

// Throws Error(kNoObject) for an empty mask.
Box mask_to_bbox(const Mask& mask);

// |a and b| / |a or b|; 1 when both are empty.
double mask_iou(const Mask& a, const Mask& b);

}  // namespace shaftpose
