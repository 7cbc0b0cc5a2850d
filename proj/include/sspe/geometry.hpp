#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <sstream>

#include "sspe/error.hpp"

namespace sspe {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Hamilton quaternion, scalar first.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Quaternion identity() { return {}; }

  double squared_norm() const { return w * w + x * x + y * y + z * z; }
  double norm() const { return std::sqrt(squared_norm()); }

  Quaternion conjugate() const { return {w, -x, -y, -z}; }
  Quaternion operator-() const { return {-w, -x, -y, -z}; }

  Quaternion operator*(const Quaternion& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  // q and -q encode the same rotation; stored quaternions keep w >= 0.
  Quaternion canonical() const { return w < 0.0 ? -*this : *this; }

  Eigen::Vector4d coeffs() const { return {w, x, y, z}; }
  static Quaternion from_coeffs(const Eigen::Vector4d& c) { return {c[0], c[1], c[2], c[3]}; }

  bool operator==(const Quaternion&) const = default;
};

inline constexpr double kQuatNormEps = 1e-12;
inline constexpr double kUnitTolerance = 1e-9;

inline Quaternion quat_normalize(const Quaternion& q) {
  const double n = q.norm();
  if (!(n > kQuatNormEps)) {
    throw Error(ErrorCode::DegenerateQuaternion, "cannot normalize a quaternion of norm " + std::to_string(n));
  }
  return {q.w / n, q.x / n, q.y / n, q.z / n};
}

inline Mat3 quat_to_rotmat(const Quaternion& q) {
  if (std::abs(q.squared_norm() - 1.0) > kUnitTolerance) {
    throw Error(ErrorCode::Precondition, "quat_to_rotmat expects a unit quaternion");
  }
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// Shepperd's method; result is canonical (w >= 0).
inline Quaternion rotmat_to_quat(const Mat3& r) {
  const double tr = r.trace();
  Quaternion q;
  if (tr > r(0, 0) && tr > r(1, 1) && tr > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (r(1, 1) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  return quat_normalize(q).canonical();
}

inline Quaternion quat_from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n < kQuatNormEps) return Quaternion::identity();
  const Vec3 a = axis / n;
  const double s = std::sin(0.5 * angle);
  return {std::cos(0.5 * angle), a.x() * s, a.y() * s, a.z() * s};
}

// Rotation vector (axis * angle) to quaternion.
inline Quaternion quat_exp(const Vec3& omega) { return quat_from_axis_angle(omega, omega.norm()); }

// Geodesic angle between the rotations of two unit quaternions.
inline double rotation_angle_between(const Quaternion& a, const Quaternion& b) {
  const double d = std::abs(a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z);
  return 2.0 * std::acos(std::min(1.0, d));
}

struct Pose {
  Quaternion q;
  Vec3 t = Vec3::Zero();

  static Pose identity() { return {}; }

  Mat3 rotation() const { return quat_to_rotmat(q); }

  Pose inverse() const {
    const Quaternion qi = q.conjugate();
    return {qi, -(quat_to_rotmat(qi) * t)};
  }
};

inline Vec3 transform_point(const Pose& pose, const Vec3& p) { return pose.rotation() * p + pose.t; }

struct CameraIntrinsics {
  double fx = 600.0;
  double fy = 600.0;
  double cx = 320.0;
  double cy = 240.0;

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::Config, "focal lengths must be positive");
  }
};

inline constexpr double kMinDepth = 1e-9;

inline Vec2 project(const CameraIntrinsics& k, const Vec3& p_cam) {
  if (!(p_cam.z() > kMinDepth)) {
    std::ostringstream os;
    os << "depth " << p_cam.z() << " is not in front of the camera";
    throw Error(ErrorCode::BehindCamera, os.str());
  }
  return {k.fx * p_cam.x() / p_cam.z() + k.cx, k.fy * p_cam.y() / p_cam.z() + k.cy};
}

// A pixel location and a direction from it, [x, y, dx, dy].
struct DirectionSample {
  double x = 0.0;
  double y = 0.0;
  double dx = 1.0;
  double dy = 0.0;

  Vec2 point() const { return {x, y}; }
  Vec2 direction() const { return {dx, dy}; }

  // Externally loaded samples are not trusted to be unit length.
  Vec2 unit_direction() const {
    const double n = std::hypot(dx, dy);
    if (!(n > kQuatNormEps)) throw Error(ErrorCode::Precondition, "direction sample has zero length");
    return {dx / n, dy / n};
  }

  bool operator==(const DirectionSample&) const = default;
};

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline constexpr double kParallelEps = 1e-9;

// Intersection of the two rays' supporting lines.
inline Vec2 line_intersection(const DirectionSample& a, const DirectionSample& b) {
  const Vec2 da = a.unit_direction();
  const Vec2 db = b.unit_direction();
  const double denom = cross2(da, db);
  if (std::abs(denom) < kParallelEps) throw Error(ErrorCode::ParallelLines, "directions are parallel");
  const double s = cross2(b.point() - a.point(), db) / denom;
  return a.point() + s * da;
}

}  // namespace sspe
