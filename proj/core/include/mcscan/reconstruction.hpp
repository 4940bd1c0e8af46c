#pragma once

#include <optional>
#include <vector>

#include "mcscan/calibration.hpp"
#include "mcscan/geometry.hpp"
#include "mcscan/servo.hpp"
#include "mcscan/tissue.hpp"
#include "mcscan/ultrasound.hpp"

namespace mcscan {

/// Closed boundary in pixel coordinates (x = column, y = row), counter-clockwise.
struct BoundaryContour {
  std::vector<Vec2> points;
  double timestamp = 0.0;

  double area() const;
  Vec2 centroid() const;
};

struct SegmentOptions {
  double threshold = 0.55;
  int resample = 64;
  int min_area_pixels = 12;
  /// Box filter radius applied before thresholding (0 = none).
  int smoothing_radius = 0;
};

struct Segmentation {
  BoundaryContour contour;
  int region_count = 0;       // connected regions above threshold and min area
  bool touches_border = false;
  int area_pixels = 0;
};

/// Threshold + marching squares on the largest connected bright region;
/// the boundary is resampled at equal angles about its centroid, starting
/// along +x. Returns nullopt when no region reaches the minimum area.
std::optional<Segmentation> segment_frame(const UltrasoundFrame& frame, const SegmentOptions& options = {});

/// P^C = T_C_M * T_M_D * T_D_U * P^U with P^U = (x s, y s, 0).
std::vector<Vec3> backproject(const BoundaryContour& contour, const FrameCalibration& calib,
                              const RigidTransform& T_C_M);

/// Inverse of backproject: camera points back to pixel coordinates.
std::vector<Vec2> project_to_image(const std::vector<Vec3>& points, const FrameCalibration& calib,
                                   const RigidTransform& T_C_M);

struct Triangle {
  int a, b, c;
};

struct TumourMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> faces;
  /// Contour index of each vertex; -1 for cap centres.
  std::vector<int> vertex_contour;

  double volume() const;
  /// Volume-weighted centroid of the enclosed solid.
  Vec3 centroid() const;
  /// True when every undirected edge is shared by exactly two faces.
  bool is_watertight() const;
};

/// Stitches index-aligned contours with triangle strips and closes both ends
/// with fans. Faces are oriented outwards. Throws Error("insufficient frames")
/// for fewer than two contours and Error on mismatched point counts.
TumourMesh build_mesh(const std::vector<std::vector<Vec3>>& contours);

struct ScoreReport {
  double location_error = 0.0;
  double diameter_error = 0.0;
  Vec3 principal_direction = Vec3::UnitX();
  double mesh_extent = 0.0;
  double ellipsoid_extent = 0.0;
  Vec3 mesh_centroid = Vec3::Zero();
};

/// Location error |centroid - centre|; diameter error compares the mesh
/// extent along its principal axis with the ellipsoid width along the same
/// axis. Throws Error for degenerate meshes.
ScoreReport score(const TumourMesh& mesh, const Ellipsoid& truth);

struct ReconstructionOptions {
  SegmentOptions segmentation;
  /// Map points into the reference frame by removing the model-predicted
  /// tissue displacement at capture time.
  bool motion_corrected = true;
};

struct Reconstruction {
  TumourMesh mesh;
  int line = -1;                // sweep line the mesh was built from
  std::vector<int> frames;      // ScanLog frame indices used, in order
  int detected_contours = 0;    // complete contours over all lines
};

/// Segments every captured frame, keeps the sweep line with the most complete
/// (border-free) contours and meshes it.
Reconstruction reconstruct_from_scan(const ScanLog& log, const FrameCalibration& calib,
                                     const ReconstructionOptions& options = {});

}  // namespace mcscan
