#include "renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "error.hpp"

namespace shaftpose {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Face { kSide, kTipCap, kBackCap, kNearPlane, kSphere };

struct Interval {
  double lo = -kInf;
  double hi = kInf;
  Face lo_face = Face::kSide;
  bool empty() const { return lo > hi; }
  void clip_lower(double v, Face f) {
    if (v > lo) {
      lo = v;
      lo_face = f;
    }
  }
  void clip_upper(double v) { hi = std::min(hi, v); }
};

// Interval of s where a*s^2 - 2*b*s + c <= 0, for a >= 0.
Interval quadratic_interval(double a, double b, double c, Face face) {
  Interval out;
  if (a <= 1e-300) {
    if (c > 0.0) out.lo = kInf, out.hi = -kInf;
    return out;
  }
  const double disc = b * b - a * c;
  if (disc < 0.0) {
    out.lo = kInf;
    out.hi = -kInf;
    return out;
  }
  const double root = std::sqrt(disc);
  out.lo = (b - root) / a;
  out.hi = (b + root) / a;
  out.lo_face = face;
  return out;
}

void clip_near_plane(Interval& iv, const Vec3& dir) {
  // Pixel rays always have dir.z > 0.
  iv.clip_lower(kNearPlane / dir.z(), Face::kNearPlane);
}

Vec3 tip_position(const ShaftPose& pose) { return {pose.x, pose.y, pose.z}; }

Vec3 shade_normal(Face face, const Vec3& point, const Vec3& tip, const Vec3& axis) {
  switch (face) {
    case Face::kSide: {
      const Vec3 w = point - tip;
      return (w - w.dot(axis) * axis).normalized();
    }
    case Face::kTipCap: return axis;
    case Face::kBackCap: return -axis;
    case Face::kNearPlane: return {0.0, 0.0, -1.0};
    case Face::kSphere: return (point - tip).normalized();
  }
  return axis;
}

}  // namespace

void ShaftGeometry::validate() const {
  if (!(radius > 0.0)) fail(ErrorCode::kConfig, "shaft radius must be positive");
  if (!(length > 0.0)) fail(ErrorCode::kConfig, "shaft length must be positive");
}

std::optional<RayHit> intersect_shaft(const Vec3& dir_in, const ShaftPose& pose, const ShaftGeometry& geom) {
  const Vec3 dir = dir_in.normalized();
  const Vec3 tip = tip_position(pose);
  const Vec3 axis = direction_from_angles(pose.pitch, pose.yaw);
  const double r2 = geom.radius * geom.radius;

  // Finite cylinder: body occupies tip - t * axis for t in [0, length].
  const Vec3 dir_perp = dir - dir.dot(axis) * axis;
  const Vec3 tip_perp = tip - tip.dot(axis) * axis;
  Interval body = quadratic_interval(dir_perp.squaredNorm(), dir_perp.dot(tip_perp), tip_perp.squaredNorm() - r2,
                                     Face::kSide);
  if (!body.empty()) {
    // Axial coordinate along the body: t(s) = tip.axis - s * dir.axis, must lie in [0, length].
    const double t0 = tip.dot(axis);
    const double slope = dir.dot(axis);
    if (std::abs(slope) < 1e-300) {
      if (t0 < 0.0 || t0 > geom.length) body.lo = kInf;
    } else {
      const double s_at_tip = t0 / slope;
      const double s_at_back = (t0 - geom.length) / slope;
      if (slope > 0.0) {
        // t decreases with s: enter through the back cap, leave through the tip.
        body.clip_lower(s_at_back, Face::kBackCap);
        body.clip_upper(s_at_tip);
      } else {
        body.clip_lower(s_at_tip, Face::kTipCap);
        body.clip_upper(s_at_back);
      }
    }
    clip_near_plane(body, dir);
  }

  Interval cap;
  cap.lo = kInf;
  cap.hi = -kInf;
  if (geom.tip == TipStyle::kHemisphere) {
    // Only the half of the sphere beyond the tip plane lies outside the cylinder, so the full
    // sphere can be used.
    cap = quadratic_interval(1.0, dir.dot(tip), tip.squaredNorm() - r2, Face::kSphere);
    if (!cap.empty()) clip_near_plane(cap, dir);
  }

  double best = kInf;
  Face face = Face::kSide;
  if (!body.empty() && body.lo > 0.0 && body.lo < best) {
    best = body.lo;
    face = body.lo_face;
  }
  if (!cap.empty() && cap.lo > 0.0 && cap.lo < best) {
    best = cap.lo;
    face = cap.lo_face;
  }
  if (best == kInf) return std::nullopt;
  return RayHit{best, shade_normal(face, best * dir, tip, axis)};
}

double camera_clearance(const ShaftPose& pose, const ShaftGeometry& geom) {
  const Vec3 tip = tip_position(pose);
  const Vec3 axis = direction_from_angles(pose.pitch, pose.yaw);
  // Closest point to the origin on the axis segment tip - t * axis, t in [0, length].
  const double t = std::clamp(tip.dot(axis), 0.0, geom.length);
  return (tip - t * axis).norm() - geom.radius;
}

RenderedSample rasterize_scene(const CameraModel& camera, std::span<const ShaftPose> poses,
                               const ShaftGeometry& geom, double light_intensity, const Image& background) {
  geom.validate();
  if (background.width != camera.width() || background.height != camera.height() || background.channels != 3) {
    fail(ErrorCode::kInvalidArgument, "background size does not match the camera");
  }
  for (const auto& p : poses) require(p.z > 0.0, "shaft tip must lie in front of the camera");

  const int w = camera.width();
  const int h = camera.height();
  RenderedSample out;
  out.image = background;
  out.masks.assign(poses.size(), Mask(w, h));
  out.silhouettes.assign(poses.size(), Mask(w, h));

  // Base albedo of brushed steel; headlight at the camera origin.
  constexpr double kAlbedo[3] = {0.62, 0.63, 0.66};
  constexpr double kAmbient = 0.18;
  constexpr double kSpecular = 0.75;
  constexpr int kShininess = 32;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Vec3 dir = camera.ray(x + 0.5, y + 0.5).normalized();
      double nearest = kInf;
      int owner = -1;
      Vec3 normal;
      for (std::size_t k = 0; k < poses.size(); ++k) {
        const auto hit = intersect_shaft(dir, poses[k], geom);
        if (!hit) continue;
        out.silhouettes[k].set(x, y);
        if (hit->distance < nearest) {
          nearest = hit->distance;
          owner = static_cast<int>(k);
          normal = hit->normal;
        }
      }
      if (owner < 0) continue;
      out.masks[owner].set(x, y);

      const Vec3 to_light = -dir;
      const double n_dot_l = std::abs(normal.dot(to_light));
      const double r_dot_v = 2.0 * n_dot_l * n_dot_l - 1.0;
      const double spec = r_dot_v > 0.0 ? std::pow(r_dot_v, kShininess) : 0.0;
      for (int c = 0; c < 3; ++c) {
        const double v = light_intensity * (kAlbedo[c] * (kAmbient + (1.0 - kAmbient) * n_dot_l) + kSpecular * spec);
        out.image.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(255.0 * v), 0L, 255L));
      }
    }
  }

  out.boxes.reserve(poses.size());
  for (const auto& s : out.silhouettes) {
    out.boxes.push_back(s.empty() ? std::nullopt : std::optional<Box>(mask_to_bbox(s)));
  }
  return out;
}

RenderedSample rasterize_shaft(const CameraModel& camera, const ShaftPose& pose, const ShaftGeometry& geom,
                               double light_intensity, const Image& background) {
  return rasterize_scene(camera, std::span<const ShaftPose>(&pose, 1), geom, light_intensity, background);
}

Mask render_silhouette(const CameraModel& camera, const ShaftPose& pose, const ShaftGeometry& geom) {
  Mask out(camera.width(), camera.height());
  if (!(pose.z > 0.0)) return out;
  for (int y = 0; y < camera.height(); ++y) {
    for (int x = 0; x < camera.width(); ++x) {
      if (intersect_shaft(camera.ray(x + 0.5, y + 0.5).normalized(), pose, geom)) out.set(x, y);
    }
  }
  return out;
}

Box mask_to_bbox(const Mask& mask) {
  int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) fail(ErrorCode::kNoObject, "mask is empty: no object");
  return {static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1), static_cast<double>(y1 + 1)};
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) {
    fail(ErrorCode::kInvalidArgument, "mask_iou: dimension mismatch");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    const bool ia = a.bits[i] != 0, ib = b.bits[i] != 0;
    inter += (ia && ib) ? 1 : 0;
    uni += (ia || ib) ? 1 : 0;
  }
  if (uni == 0) return 1.0;  // both empty
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace shaftpose
