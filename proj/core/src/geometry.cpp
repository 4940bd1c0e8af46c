#include "mcscan/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace mcscan {

namespace {

constexpr double kDriftTolerance = 1e-9;

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

Mat3 nearest_rotation(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

}  // namespace

bool is_finite(const Vec3& v) { return v.allFinite(); }

RigidTransform::RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {}

RigidTransform RigidTransform::translation(const Vec3& t) { return {Mat3::Identity(), t}; }

RigidTransform RigidTransform::rot_x(double angle) { return axis_angle(Vec3::UnitX(), angle); }
RigidTransform RigidTransform::rot_y(double angle) { return axis_angle(Vec3::UnitY(), angle); }
RigidTransform RigidTransform::rot_z(double angle) { return axis_angle(Vec3::UnitZ(), angle); }

RigidTransform RigidTransform::axis_angle(const Vec3& axis, double angle) {
  const double norm = axis.norm();
  if (!(norm > 0.0) || !std::isfinite(angle)) throw Error("axis_angle: invalid axis or angle");
  return rotation(Eigen::AngleAxisd(angle, axis / norm).toRotationMatrix());
}

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  RigidTransform t(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>());
  if (!t.is_valid(1e-6)) throw Error("from_matrix: not a rigid transform");
  return t;
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  Mat3 r = rotation_ * rhs.rotation_;
  if (orthonormality_error(r) > kDriftTolerance) r = nearest_rotation(r);
  return {r, rotation_ * rhs.translation_ + translation_};
}

double RigidTransform::angle() const {
  const double c = std::clamp((rotation_.trace() - 1.0) / 2.0, -1.0, 1.0);
  // acos loses precision near 0; use the skew part there.
  const Vec3 skew(rotation_(2, 1) - rotation_(1, 2), rotation_(0, 2) - rotation_(2, 0),
                  rotation_(1, 0) - rotation_(0, 1));
  return std::atan2(0.5 * skew.norm(), c);
}

bool RigidTransform::is_valid(double tol) const {
  return rotation_.allFinite() && translation_.allFinite() && orthonormality_error(rotation_) <= tol &&
         std::abs(rotation_.determinant() - 1.0) <= tol;
}

RigidTransform RigidTransform::orthonormalized() const { return {nearest_rotation(rotation_), translation_}; }

std::array<double, 12> RigidTransform::row_major_3x4() const {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(4 * r + c)] = rotation_(r, c);
    out[static_cast<std::size_t>(4 * r + 3)] = translation_(r);
  }
  return out;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) { return a * b; }

RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }

RigidTransform rotation_aligning(const Vec3& from_dir, const Vec3& to_dir) {
  const double nf = from_dir.norm();
  const double nt = to_dir.norm();
  if (!(nf > 0.0) || !(nt > 0.0) || !from_dir.allFinite() || !to_dir.allFinite()) {
    throw Error("rotation_aligning: directions must be finite and non-zero");
  }
  const Vec3 a = from_dir / nf;
  const Vec3 b = to_dir / nt;
  const Vec3 axis = a.cross(b);
  const double s = axis.norm();
  const double c = a.dot(b);

  if (s < 1e-12) {
    if (c > 0.0) return RigidTransform::identity();
    // Antiparallel: rotate by pi about the coordinate axis least parallel to a,
    // projected onto the plane perpendicular to a.
    int least = 0;
    a.cwiseAbs().minCoeff(&least);
    Vec3 e = Vec3::Zero();
    e(least) = 1.0;
    const Vec3 perp = (e - a.dot(e) * a).normalized();
    return RigidTransform::rotation(2.0 * perp * perp.transpose() - Mat3::Identity());
  }
  return RigidTransform::rotation(Eigen::AngleAxisd(std::atan2(s, c), axis / s).toRotationMatrix());
}

double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.inverse() * b).angle();
}

double max_abs_difference(const RigidTransform& a, const RigidTransform& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

}  // namespace mcscan
