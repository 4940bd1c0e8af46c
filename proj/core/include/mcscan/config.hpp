#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mcscan/calibration.hpp"
#include "mcscan/reconstruction.hpp"
#include "mcscan/servo.hpp"
#include "mcscan/tissue.hpp"
#include "mcscan/ultrasound.hpp"

namespace mcscan {

struct MotionProfile {
  std::string name;
  double tau = 75.0;  // frames
  double b = 3.0;     // mm
  double z0 = 0.0;
  double phi = 1.5707963267948966;  // exhale at t = 0
  /// Motion axis used when the profile runs alone (E2, E3).
  std::string axis = "z";
  /// Tracker noise of the calibrated regime, mm.
  double tracker_sigma = 0.0;
  /// Frames observed before the model is fitted.
  int learn_frames = 300;
};

struct PhantomSpec {
  std::string name = "flat";
  /// "flat" or "dome" (spherical cap with its apex at `height`).
  std::string surface = "flat";
  double height = 0.0;
  double dome_radius = 60.0;
  double half_extent = 40.0;
  double grid_spacing = 0.5;
  Ellipsoid tumour;
  double intensity_inside = 0.8;
  double intensity_outside = 0.3;

  TissuePhantom build() const;
};

/// Noise and hardware conditions for one evaluation regime.
struct Regime {
  std::string name = "ideal";
  /// Use each profile's tracker_sigma; otherwise the tracker is exact.
  bool tracker_noise = false;
  double outlier_rate = 0.0;
  double detection_probability = 1.0;
  double marker_sigma_translation = 0.0;  // mm
  double marker_sigma_rotation = 0.0;     // rad
  bool speckle = false;
  /// Apply the configured robot limits; otherwise unlimited with no latency.
  bool limited_robot = false;

  static Regime ideal();
  static Regime calibrated();
};

struct E1Spec {
  int trials_per_axis = 3;
  std::vector<std::string> axes{"x", "y", "z"};
};

struct E2Spec {
  std::string phantom = "flat";
  double cycles = 3.0;  // dwell length in model periods
};

struct E3Spec {
  std::vector<std::string> phantoms{"flat", "dome"};
  double half_x = 15.0;
  double half_y = 12.8;
  double step = 0.5;
  double contact_offset = 0.0;
  StartCorner start = StartCorner::NearestOrigin;
  /// Profile re-run with compensation off for the ablation; empty disables it.
  std::string ablation_profile = "P3";
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int model_degree = 3;
  bool compensation = true;
  bool dump_frames = false;

  std::vector<MotionProfile> profiles;
  std::vector<PhantomSpec> phantoms;
  std::vector<Regime> regimes;

  ImageSpec image;
  SpeckleModel speckle;
  FrameCalibration calib;
  RigidTransform T_C_B;
  RobotLimits robot;
  ServoConfig servo;
  /// Tracked surface grid, centred on the tumour.
  double tracking_half_width = 5.0;
  int tracking_nx = 10;
  int tracking_ny = 10;
  SegmentOptions segmentation;

  E1Spec e1;
  E2Spec e2;
  E3Spec e3;

  /// Throws Error describing the first problem found.
  void validate() const;
  const PhantomSpec& phantom(const std::string& name) const;
  const MotionProfile& profile(const std::string& name) const;
};

ExperimentConfig default_config();

/// Reads a YAML document; keys not present keep their defaults.
ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical YAML of the effective configuration (round-trips through
/// parse_config).
std::string dump_config(const ExperimentConfig& config);

Vec3 axis_from_name(const std::string& name);

}  // namespace mcscan
