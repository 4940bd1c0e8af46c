#pragma once

#include <cstdint>
#include <deque>
#include <numbers>
#include <string>
#include <vector>

#include "mcscan/calibration.hpp"
#include "mcscan/geometry.hpp"
#include "mcscan/motion.hpp"
#include "mcscan/planner.hpp"
#include "mcscan/tissue.hpp"
#include "mcscan/ultrasound.hpp"

namespace mcscan {

constexpr double kDegree = std::numbers::pi / 180.0;

struct RobotLimits {
  double max_linear_speed = 20.0;  // mm/s, <= 0 means unlimited
  double max_angular_speed = 1.0;  // rad/s, <= 0 means unlimited
  int latency_ticks = 0;
  double tick_seconds = 1.0 / 25.0;

  static RobotLimits ideal() { return {0.0, 0.0, 0, 1.0 / 25.0}; }
};

/// Cartesian stand-in for the patient-side manipulator: executes the command
/// issued `latency_ticks` earlier, clipped to the speed limits.
class VirtualRobot {
 public:
  struct Step {
    RigidTransform commanded;
    RigidTransform executed;
    double linear = 0.0;   // executed translation this tick, mm
    double angular = 0.0;  // executed rotation this tick, rad
    bool saturated = false;
  };

  VirtualRobot(const RigidTransform& T_B_E, const RobotLimits& limits);

  const RigidTransform& pose() const { return pose_; }
  const RobotLimits& limits() const { return limits_; }
  Step command(const RigidTransform& target);

 private:
  RigidTransform pose_;
  RobotLimits limits_;
  std::deque<RigidTransform> pending_;
};

/// How the motion-compensation term enters the control law.
enum class CompensationMode {
  /// Both products exactly as printed: the compensation term appears inside
  /// the scanning increment and again in the end-effector chain.
  AsPrinted,
  /// The compensation term is applied once, in the end-effector chain only.
  SingleApplication,
};

/// Compensation increment T^_M^M* = T_M_D T_D_S T_S_S* T_S*_D* T_D*_M* for a
/// surface displacement `dx` (camera frame). T_D_S is the rotation taking the
/// transducer orientation onto the camera orientation.
RigidTransform compensation_from_increment(const Vec3& dx, const RigidTransform& T_C_M,
                                           const FrameCalibration& calib);

/// Compensation increment from the learned model: dx = x(t + lookahead) - x(t)
/// with x(t) = predict_displacement(model, basis, t).
RigidTransform compensation_step(const RespiratoryModel& model, const MotionBasis& basis, double t,
                                 const RigidTransform& T_C_M, const FrameCalibration& calib, int lookahead = 1);

/// Scanning increment T~_M^M*. AsPrinted: comp * (T_C_M)^-1 * T_C_M*;
/// SingleApplication drops the leading comp factor.
RigidTransform scanning_step(const RigidTransform& T_C_M, const RigidTransform& T_C_Mstar, const RigidTransform& comp,
                             CompensationMode mode = CompensationMode::AsPrinted);

/// T_B_E* = T_B_E * T_E_M * scan * comp * T_M*_E*, with T_M*_E* = (T_E_M)^-1.
RigidTransform end_effector_target(const RigidTransform& T_B_E, const FrameCalibration& calib,
                                   const RigidTransform& scan, const RigidTransform& comp);

enum class CapturePolicy {
  OnArrival,  // one frame each time a waypoint is reached
  EveryTick,  // dwell: one frame per tick, cursor never advances
};

struct ServoConfig {
  bool compensation = true;
  CompensationMode mode = CompensationMode::SingleApplication;
  int lookahead = 1;
  double marker_sigma_translation = 0.1;         // mm
  double marker_sigma_rotation = 0.2 * kDegree;  // rad
  double reach_position = 0.2;                   // mm
  double reach_angle = 0.5 * kDegree;            // rad
  bool online_update = true;
  PhaseUpdateOptions phase;
  int saturation_abort_ticks = 250;
  int max_ticks = 20000;
  CapturePolicy capture = CapturePolicy::OnArrival;
  int dwell_ticks = 0;  // EveryTick only
  double start_time = 0.0;
  std::uint64_t seed = 0;
};

/// Everything about the simulated world the controller runs in.
struct ScanSetup {
  TissuePhantom phantom;
  MotionGroundTruth ground_truth;
  FrameCalibration calib;
  RigidTransform T_C_B;  // robot base in camera frame
  RobotLimits robot;
  ImageSpec image;
  SpeckleModel speckle;
  TrackingRegion motion_region;  // observed for the online update
  TrackerNoise tracker;
};

struct TickRecord {
  double t = 0.0;
  int waypoint = 0;
  RigidTransform commanded;  // T_B_E*
  RigidTransform executed;   // T_B_E after this tick
  RigidTransform marker_true;
  RigidTransform marker_detected;
  RigidTransform tissue_pose;
  RespiratoryModel model;
  double residual_position = 0.0;  // detected vs desired marker, mm
  double residual_angle = 0.0;     // rad
  double linear_step = 0.0;
  double angular_step = 0.0;
  bool saturated = false;
  int frame = -1;  // index into ScanLog::frames
};

struct CapturedFrame {
  UltrasoundFrame image;
  RigidTransform marker_detected;  // T_C_M the system believes at capture
  RespiratoryModel model;          // model snapshot at capture
  int waypoint = 0;
  int line = -1;
  double t = 0.0;
};

struct ScanLog {
  std::vector<TickRecord> ticks;
  std::vector<CapturedFrame> frames;
  MotionBasis basis;
  bool completed = false;
  bool aborted = false;
  std::string diagnostic;
};

/// Closed-loop scan over `trajectory`. Deterministic given config.seed.
/// Throws Error when the robot stays saturated for saturation_abort_ticks or
/// max_ticks elapse.
ScanLog run_scan(const ScanSetup& setup, const ScanTrajectory& trajectory, const LearnedMotion& learned,
                 const ServoConfig& config);

/// Holds `waypoint` for config.dwell_ticks ticks, capturing a frame per tick.
ScanLog run_dwell(const ScanSetup& setup, const Waypoint& waypoint, const LearnedMotion& learned,
                  ServoConfig config);

/// Pose of the transducer relative to the tissue, (T_C_tissue)^-1 T_C_D.
RigidTransform transducer_in_tissue(const TickRecord& tick, const FrameCalibration& calib);

/// Per-frame stabilisation NCC against the frame captured at the first
/// exhale instant of the dwell.
struct StabilisationResult {
  std::vector<double> times;
  std::vector<double> ncc;
  double reference_time = 0.0;
  ScanLog log;

  double mean() const;
  double min() const;
};

StabilisationResult stabilisation_experiment(const ScanSetup& setup, const Waypoint& dwell, const LearnedMotion& learned,
                                             const ServoConfig& config, int duration_ticks);

}  // namespace mcscan
