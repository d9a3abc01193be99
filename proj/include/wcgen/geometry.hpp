#pragma once

// Pinhole camera model and the projective primitives used by both warps.
//
// Camera frame: x right, y down, z forward. World frame: z up, right handed.
// Pixel coordinates are continuous with pixel centers at integer positions.

#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "wcgen/error.hpp"

namespace wcgen {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
/// A 3-vector used as a ray direction; unit length where documented.
using Direction = Eigen::Vector3d;

inline constexpr double kRotationTolerance = 1e-9;

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width &&
           cy >= 0.0 && cy < height && std::isfinite(fx) && std::isfinite(fy);
  }

  void validate() const {
    require(valid(), ErrorCode::invalid_argument,
            "intrinsics require fx, fy > 0 and a principal point inside the image");
  }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// Square pixels and centered principal point for a given vertical field of view.
inline Intrinsics intrinsics_from_fov(int width, int height, double vertical_fov_deg) {
  require(width > 0 && height > 0, ErrorCode::invalid_argument, "image size must be positive");
  require(vertical_fov_deg > 0.0 && vertical_fov_deg < 180.0, ErrorCode::invalid_argument,
          "vertical field of view must lie in (0, 180) degrees");
  const double f = (height / 2.0) / std::tan(deg2rad(vertical_fov_deg) / 2.0);
  return Intrinsics{f, f, width / 2.0, height / 2.0, width, height};
}

inline bool is_rotation(const Mat3& r, double tol = kRotationTolerance) {
  if (!r.allFinite()) return false;
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

inline void require_rotation(const Mat3& r, const char* what) {
  require(is_rotation(r), ErrorCode::invalid_argument,
          std::string(what) + " is not an orthonormal rotation");
}

/// Clockwise (rightward) turn about the camera's down axis.
inline Mat3 yaw_rotation(double deg) {
  return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitY()).toRotationMatrix();
}

/// Positive angles tilt the optical axis upward.
inline Mat3 pitch_rotation(double deg) {
  return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitX()).toRotationMatrix();
}

inline Mat3 roll_rotation(double deg) {
  return Eigen::AngleAxisd(deg2rad(deg), Vec3::UnitZ()).toRotationMatrix();
}

/// Camera-to-world rigid transform: p_world = rotation * p_camera + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  void validate() const { require_rotation(rotation, "pose rotation"); }
};

/// Rigid motion between two camera frames.
///
/// rotate_after_translate: p' = R * (p + T), the translate-then-rotate form.
/// rotate_then_add:        p' = R * p + t, the canonical form.
/// The two agree when t = R * T.
struct RelativePose {
  enum class Convention { rotate_after_translate, rotate_then_add };

  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Convention convention = Convention::rotate_then_add;

  static RelativePose identity() { return {}; }

  /// Canonical transform taking points in `from`'s camera frame into `to`'s.
  static RelativePose between(const Pose& from, const Pose& to) {
    const Mat3 to_inv = to.rotation.transpose();
    return {to_inv * from.rotation, to_inv * (from.translation - to.translation),
            Convention::rotate_then_add};
  }

  RelativePose canonical() const {
    if (convention == Convention::rotate_then_add) return *this;
    return {rotation, rotation * translation, Convention::rotate_then_add};
  }

  RelativePose translate_first() const {
    if (convention == Convention::rotate_after_translate) return *this;
    return {rotation, rotation.transpose() * translation, Convention::rotate_after_translate};
  }

  void validate() const { require_rotation(rotation, "relative rotation"); }
};

/// Lift a pixel with metric depth into the camera frame. The returned z equals
/// `depth` exactly.
inline Vec3 unproject(PixelCoord p, double depth, const Intrinsics& k) {
  require(std::isfinite(depth) && depth > 0.0, ErrorCode::invalid_argument,
          "unproject requires a positive finite depth");
  return {(p.u - k.cx) * depth / k.fx, (p.v - k.cy) * depth / k.fy, depth};
}

struct Projection {
  PixelCoord pixel;
  double depth = 0.0;
};

/// Perspective projection; nullopt for points on or behind the image plane.
inline std::optional<Projection> project(const Vec3& p, const Intrinsics& k) {
  if (!(p.z() > 0.0) || !p.allFinite()) return std::nullopt;
  return Projection{{k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy}, p.z()};
}

inline Vec3 camera_to_world(const Vec3& p, const Pose& pose) {
  return pose.rotation * p + pose.translation;
}

inline Vec3 apply_relative(const Vec3& p, const RelativePose& rel) {
  if (rel.convention == RelativePose::Convention::rotate_after_translate)
    return rel.rotation * (p + rel.translation);
  return rel.rotation * p + rel.translation;
}

/// Unit ray through a pixel.
inline Direction pixel_to_sphere(PixelCoord p, const Intrinsics& k) {
  const Vec3 ray((p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0);
  return ray / ray.norm();
}

/// Apply view_rotation * extrinsic to a direction.
inline Direction rotate_direction(const Direction& d, const Mat3& view_rotation,
                                  const Mat3& extrinsic) {
  require_rotation(view_rotation, "view rotation");
  require_rotation(extrinsic, "extrinsic rotation");
  return view_rotation * (extrinsic * d);
}

}  // namespace wcgen
