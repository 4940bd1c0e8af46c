#pragma once

#include <array>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mcscan {

/// Lengths are millimetres and angles radians everywhere in the library.
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

bool is_finite(const Vec3& v);

/// Proper rigid motion in 3D: p -> R p + t.
///
/// A transform named `T_A_B` in this code base is the pose of frame B
/// expressed in frame A, so `T_A_B.apply(p_B)` yields the point in A and
/// `T_A_B * T_B_C == T_A_C`.
class RigidTransform {
 public:
  RigidTransform();
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform translation(const Vec3& t);
  static RigidTransform translation(double x, double y, double z) { return translation(Vec3(x, y, z)); }
  static RigidTransform rotation(const Mat3& r) { return {r, Vec3::Zero()}; }
  static RigidTransform rot_x(double angle);
  static RigidTransform rot_y(double angle);
  static RigidTransform rot_z(double angle);
  static RigidTransform axis_angle(const Vec3& axis, double angle);
  /// Throws Error when the upper-left block is not a proper rotation.
  static RigidTransform from_matrix(const Mat4& m);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  RigidTransform inverse() const;
  /// Applies `rhs` first, then `*this`.
  RigidTransform operator*(const RigidTransform& rhs) const;

  /// Rotation angle in [0, pi].
  double angle() const;
  /// Orthonormality and det(R) = +1 within `tol`, finite translation.
  bool is_valid(double tol = 1e-9) const;
  RigidTransform orthonormalized() const;

  /// R row-major followed by t: r00 r01 r02 t0 r10 ... t2 (3x4 row-major).
  std::array<double, 12> row_major_3x4() const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform inverse(const RigidTransform& t);

/// Minimal-angle rotation taking normalised `from_dir` onto normalised `to_dir`.
///
/// Antiparallel inputs rotate by pi about the coordinate axis least parallel
/// to `from_dir`, made perpendicular to it. Throws Error on zero-length input.
RigidTransform rotation_aligning(const Vec3& from_dir, const Vec3& to_dir);

/// Distance between rotations of `a` and `b` (angle of a^-1 b).
double rotation_distance(const RigidTransform& a, const RigidTransform& b);

/// Largest absolute element-wise difference of the 4x4 matrices.
double max_abs_difference(const RigidTransform& a, const RigidTransform& b);

}  // namespace mcscan
