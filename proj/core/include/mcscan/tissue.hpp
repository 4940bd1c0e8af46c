#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mcscan/geometry.hpp"
#include "mcscan/respiratory_model.hpp"

namespace mcscan {

/// Regular grid of surface heights over [x_min, x_max] x [y_min, y_max],
/// sampled every `spacing` mm and bilinearly interpolated.
class Heightfield {
 public:
  Heightfield() = default;
  Heightfield(double x_min, double y_min, double spacing, int nx, int ny, std::vector<double> heights);

  static Heightfield from_function(double x_min, double x_max, double y_min, double y_max, double spacing,
                                   const std::function<double(double, double)>& height);
  static Heightfield flat(double x_min, double x_max, double y_min, double y_max, double spacing, double height);

  double x_min() const { return x_min_; }
  double y_min() const { return y_min_; }
  double x_max() const { return x_min_ + spacing_ * (nx_ - 1); }
  double y_max() const { return y_min_ + spacing_ * (ny_ - 1); }
  double spacing() const { return spacing_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }

  bool contains(const Vec2& xy, double tol = 1e-9) const;
  /// Throws Error outside the extent.
  double height(const Vec2& xy) const;
  /// Like height() but returns false instead of throwing.
  bool try_height(const Vec2& xy, double& out) const;

 private:
  double grid(int ix, int iy) const { return heights_[static_cast<std::size_t>(iy) * nx_ + ix]; }

  double x_min_ = 0.0;
  double y_min_ = 0.0;
  double spacing_ = 1.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<double> heights_;
};

/// Axis-aligned ellipsoid in the tissue frame.
struct Ellipsoid {
  Vec3 center = Vec3::Zero();
  Vec3 semi_axes = Vec3::Ones();
  Mat3 orientation = Mat3::Identity();  // columns are the semi-axis directions

  bool contains(const Vec3& p) const;
  /// Full width of the ellipsoid measured along unit direction d.
  double width_along(const Vec3& d) const;
  double volume() const;
  Ellipsoid transformed(const RigidTransform& t) const;
};

struct TissuePhantom {
  Heightfield surface;
  Ellipsoid tumour;
  double intensity_inside = 0.8;
  double intensity_outside = 0.3;

  /// Throws Error unless the tumour lies strictly below the surface, inside
  /// the extent, with positive semi-axes and intensities in [0, 1].
  void validate() const;
};

/// Ground-truth motion: rigid translation z(t) - z(0) along `axis`.
struct MotionGroundTruth {
  RespiratoryModel model;
  Vec3 axis = Vec3::UnitZ();
  double frame_rate = 25.0;

  /// Signed displacement along the axis relative to t = 0.
  double displacement(double t) const { return model.evaluate(t) - model.evaluate(0.0); }
  /// Frame time of the first exhale instant (z = z0) at or after `t`.
  double next_exhale(double t) const;
};

RigidTransform tissue_pose_at(const MotionGroundTruth& gt, double t);

struct SurfaceSample {
  Vec3 point;
  Vec3 normal;  // unit, positive z
};

/// Surface point and outward normal from central differences of the
/// interpolated heightfield. Throws Error outside the extent.
SurfaceSample surface_point_and_normal(const Heightfield& surface, const Vec2& xy);
inline SurfaceSample surface_point_and_normal(const TissuePhantom& phantom, const Vec2& xy) {
  return surface_point_and_normal(phantom.surface, xy);
}

/// Rectangular region sampled by an nx x ny grid (inclusive corners).
struct TrackingRegion {
  double x_min = -5.0;
  double x_max = 5.0;
  double y_min = -5.0;
  double y_max = 5.0;
  int nx = 10;
  int ny = 10;
};

struct TrackerNoise {
  double sigma = 0.0;  // mm, isotropic
  double outlier_rate = 0.0;
  /// Probability that an outlier is caught by the consistency check.
  double detection_probability = 1.0;
};

/// Simulated stereo + flow tracks of surface grid points.
struct TrackedGrid {
  std::vector<Vec3> points_ref;
  std::vector<Vec3> points_now;
  std::vector<bool> consistent;
  /// Ground truth: which tracks received an outlier error.
  std::vector<bool> outlier;
};

/// Deterministic given `seed`. Throws Error("empty tracking region") for an
/// empty grid and Error when the region leaves the surface extent.
TrackedGrid observe_grid(const TissuePhantom& phantom, const MotionGroundTruth& gt, const TrackingRegion& region,
                         double t, const TrackerNoise& noise, std::uint64_t seed);

}  // namespace mcscan
