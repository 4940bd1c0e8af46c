#pragma once

#include "mcscan/geometry.hpp"

namespace mcscan {

/// Constant transforms of the probe assembly.
///
/// T_E_M: marker in end-effector frame; T_M_D: transducer in marker frame;
/// T_D_U: ultrasound image frame in transducer frame. Image points are
/// P^U = (col * pixel_spacing, row * pixel_spacing, 0).
struct FrameCalibration {
  RigidTransform T_E_M;
  RigidTransform T_M_D;
  RigidTransform T_D_U;
  double pixel_spacing = 0.2;

  void validate() const {
    if (!T_E_M.is_valid() || !T_M_D.is_valid() || !T_D_U.is_valid()) throw Error("calibration: invalid transform");
    if (!(pixel_spacing > 0.0)) throw Error("calibration: pixel spacing must be positive");
  }
};

/// Image frame in the transducer frame for a linear array `cols` pixels wide:
/// columns run along transducer x (centred), rows along transducer z (depth).
inline RigidTransform image_to_transducer(int cols, double pixel_spacing) {
  Mat3 r;
  r.col(0) = Vec3::UnitX();   // image u -> lateral
  r.col(1) = Vec3::UnitZ();   // image v -> depth
  r.col(2) = -Vec3::UnitY();  // image normal
  return {r, Vec3(-0.5 * (cols - 1) * pixel_spacing, 0.0, 0.0)};
}

}  // namespace mcscan
