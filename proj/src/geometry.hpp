#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

namespace shaftpose {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr std::size_t kPoseDims = 5;

// Tip of a shaft in the camera frame. Millimetres and degrees.
struct ShaftPose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  double operator[](std::size_t i) const;
  double& operator[](std::size_t i);
  bool operator==(const ShaftPose&) const = default;
};

struct Range {
  double min;
  double max;
  double width() const { return max - min; }
  double mid() const { return 0.5 * (min + max); }
};

struct PoseRanges {
  // Generation ranges for x, y, z, pitch, yaw.
  std::array<Range, kPoseDims> dims{{{-20.0, 20.0}, {-20.0, 20.0}, {10.0, 40.0}, {50.0, 90.0}, {0.0, 358.0}}};

  const Range& operator[](std::size_t i) const { return dims[i]; }
  Range& operator[](std::size_t i) { return dims[i]; }
  void validate() const;
};

using NormalizedPose = std::array<double, kPoseDims>;

class CameraModel {
 public:
  CameraModel(int width, int height, double horizontal_fov_deg = 95.0);
  CameraModel(int width, int height, double horizontal_fov_deg, Vec2 principal_point);

  int width() const { return width_; }
  int height() const { return height_; }
  double horizontal_fov() const { return fov_deg_; }
  double focal() const { return focal_; }
  const Vec2& principal_point() const { return principal_; }

  // Pinhole projection; throws for points with z <= 0.
  Vec2 project(const Vec3& p) const;
  // Unnormalised ray direction through pixel coordinates (u, v).
  Vec3 ray(double u, double v) const;

 private:
  int width_;
  int height_;
  double fov_deg_;
  double focal_;
  Vec2 principal_;
};

double deg2rad(double deg);
double rad2deg(double rad);

// Shaft axis direction: pitch from the image plane, yaw as azimuth about the optical axis.
Vec3 direction_from_angles(double pitch_deg, double yaw_deg);

Vec2 project_point(const CameraModel& camera, const Vec3& p);

NormalizedPose normalize_pose(const ShaftPose& pose, const PoseRanges& ranges);
ShaftPose denormalize_pose(const NormalizedPose& v, const PoseRanges& ranges);

// Circular distance in degrees, in [0, 180].
double yaw_error(double a_deg, double b_deg);

}  // namespace shaftpose
