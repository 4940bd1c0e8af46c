#pragma once

#include <string>
#include <vector>

#include "mcscan/calibration.hpp"
#include "mcscan/geometry.hpp"
#include "mcscan/tissue.hpp"

namespace mcscan {

enum class StartCorner { NearestOrigin, MinXMinY, MinXMaxY, MaxXMinY, MaxXMaxY };

/// Convex scan region in reference-surface XY coordinates (mm).
struct ScanRegion {
  std::vector<Vec2> polygon;
  StartCorner start = StartCorner::NearestOrigin;

  static ScanRegion rectangle(double x_min, double x_max, double y_min, double y_max,
                              StartCorner start = StartCorner::NearestOrigin);
  double area() const;
  /// Throws Error for fewer than 3 vertices, zero area or a non-convex outline.
  void validate() const;
};

struct ZigzagPath {
  std::vector<Vec2> points;
  /// Sweep-line index of each point; -1 on the connecting segments.
  std::vector<int> line;
  /// Unit direction of the sweep lines (either +x or +y).
  Vec2 sweep_axis = Vec2::UnitX();
  double line_spacing = 0.0;
  int line_count = 0;
};

/// Boustrophedon coverage: parallel lines transducer_width / 2 apart along the
/// longer side of the bounding box, alternating direction, sampled every
/// `step` mm (the last interval of a line may be shorter).
ZigzagPath plan_zigzag(const ScanRegion& region, double transducer_width, double step);

struct Waypoint {
  Vec3 surface_point;
  Vec3 normal;
  RigidTransform desired_transducer;  // T_C_D*
  RigidTransform desired_marker;      // T_C_M*
  int line = -1;
};

struct ScanTrajectory {
  std::vector<Waypoint> waypoints;
  Vec3 sweep_axis = Vec3::UnitX();
};

struct LiftOptions {
  /// Transducer stand-off along the normal; 0 is pressing contact.
  double contact_offset = 0.0;
};

/// Places the transducer on the surface at every path point with its beam
/// axis along -normal and its elevation axis along the sweep. Throws Error
/// listing every path index outside the surface extent.
ScanTrajectory lift_to_poses(const ZigzagPath& path, const Heightfield& surface, const FrameCalibration& calib,
                             const LiftOptions& options = {});

/// Transducer orientation with beam axis -normal and elevation axis along the
/// tangent projection of `sweep`.
Mat3 transducer_orientation(const Vec3& normal, const Vec3& sweep);

}  // namespace mcscan
