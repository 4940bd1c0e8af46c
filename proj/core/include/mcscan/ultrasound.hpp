#pragma once

#include <cstdint>
#include <vector>

#include "mcscan/calibration.hpp"
#include "mcscan/geometry.hpp"
#include "mcscan/tissue.hpp"

namespace mcscan {

struct ImageSpec {
  int rows = 128;
  int cols = 128;
  double spacing = 0.2;  // mm per pixel
  /// Sub-samples per pixel side; > 1 gives area-averaged (anti-aliased) pixels.
  int supersample = 1;

  double width_mm() const { return cols * spacing; }
  void validate() const;
};

/// Multiplicative speckle anchored to tissue coordinates, so that the same
/// tissue region always produces the same texture; optional additive
/// per-frame electronic noise on top.
struct SpeckleModel {
  bool enabled = false;
  double sigma = 0.3;
  double correlation_length = 0.4;  // mm, lattice pitch of the texture
  double electronic_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct UltrasoundFrame {
  int rows = 0;
  int cols = 0;
  double spacing = 0.2;
  std::vector<double> intensities;  // row-major, in [0, 1]
  RigidTransform capture_pose;      // transducer in camera frame, T_C_D
  double timestamp = 0.0;           // frames

  double at(int row, int col) const { return intensities[static_cast<std::size_t>(row) * cols + col]; }
  double& at(int row, int col) { return intensities[static_cast<std::size_t>(row) * cols + col]; }
};

/// Renders the B-mode slice seen by a transducer at `transducer_pose` (T_C_D)
/// while the tissue sits at `tissue_pose` (T_C_tissue). Pixels above the
/// surface or outside its extent are air (intensity 0). Pure given
/// `frame_seed` and the speckle seed.
UltrasoundFrame acquire(const TissuePhantom& phantom, const RigidTransform& tissue_pose,
                        const RigidTransform& transducer_pose, const ImageSpec& spec,
                        const SpeckleModel& speckle = {}, std::uint64_t frame_seed = 0, double timestamp = 0.0);

/// Zero-mean normalised cross-correlation clamped to [0, 1]. Two constant
/// images score 1 if equal and 0 otherwise; one constant image scores 0.
/// Throws Error on a size mismatch.
double ncc(const UltrasoundFrame& a, const UltrasoundFrame& b);

}  // namespace mcscan
