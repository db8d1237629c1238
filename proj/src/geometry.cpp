#include "geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "error.hpp"

namespace shaftpose {

double ShaftPose::operator[](std::size_t i) const {
  switch (i) {
    case 0: return x;
    case 1: return y;
    case 2: return z;
    case 3: return pitch;
    case 4: return yaw;
  }
  fail(ErrorCode::kInvalidArgument, "pose dimension out of range: " + std::to_string(i));
}

double& ShaftPose::operator[](std::size_t i) {
  switch (i) {
    case 0: return x;
    case 1: return y;
    case 2: return z;
    case 3: return pitch;
    case 4: return yaw;
  }
  fail(ErrorCode::kInvalidArgument, "pose dimension out of range: " + std::to_string(i));
}

void PoseRanges::validate() const {
  static constexpr const char* kNames[kPoseDims] = {"x", "y", "z", "pitch", "yaw"};
  for (std::size_t i = 0; i < kPoseDims; ++i) {
    if (!(dims[i].min < dims[i].max)) {
      fail(ErrorCode::kConfig, std::string("pose range for ") + kNames[i] + " must satisfy min < max");
    }
  }
}

CameraModel::CameraModel(int width, int height, double horizontal_fov_deg)
    : CameraModel(width, height, horizontal_fov_deg, Vec2(0.5 * width, 0.5 * height)) {}

CameraModel::CameraModel(int width, int height, double horizontal_fov_deg, Vec2 principal_point)
    : width_(width), height_(height), fov_deg_(horizontal_fov_deg), principal_(std::move(principal_point)) {
  require(width > 0 && height > 0, "camera dimensions must be positive");
  require(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0, "horizontal fov must lie in (0, 180)");
  focal_ = (0.5 * width) / std::tan(0.5 * deg2rad(horizontal_fov_deg));
}

Vec2 CameraModel::project(const Vec3& p) const {
  if (!(p.z() > 0.0)) fail(ErrorCode::kInvalidArgument, "cannot project a point at or behind the camera");
  return {principal_.x() + focal_ * p.x() / p.z(), principal_.y() + focal_ * p.y() / p.z()};
}

Vec3 CameraModel::ray(double u, double v) const {
  return {(u - principal_.x()) / focal_, (v - principal_.y()) / focal_, 1.0};
}

double deg2rad(double deg) { return deg * (std::numbers::pi / 180.0); }
double rad2deg(double rad) { return rad * (180.0 / std::numbers::pi); }

Vec3 direction_from_angles(double pitch_deg, double yaw_deg) {
  const double phi = deg2rad(pitch_deg);
  const double psi = deg2rad(yaw_deg);
  return {std::cos(phi) * std::cos(psi), std::cos(phi) * std::sin(psi), std::sin(phi)};
}

Vec2 project_point(const CameraModel& camera, const Vec3& p) { return camera.project(p); }

NormalizedPose normalize_pose(const ShaftPose& pose, const PoseRanges& ranges) {
  NormalizedPose out{};
  for (std::size_t i = 0; i < kPoseDims; ++i) {
    out[i] = 2.0 * (pose[i] - ranges[i].min) / ranges[i].width() - 1.0;
  }
  return out;
}

ShaftPose denormalize_pose(const NormalizedPose& v, const PoseRanges& ranges) {
  ShaftPose out;
  for (std::size_t i = 0; i < kPoseDims; ++i) {
    out[i] = ranges[i].min + 0.5 * (v[i] + 1.0) * ranges[i].width();
  }
  return out;
}

double yaw_error(double a_deg, double b_deg) {
  const double d = std::fmod(std::abs(a_deg - b_deg), 360.0);
  return std::min(d, 360.0 - d);
}

}  // namespace shaftpose
