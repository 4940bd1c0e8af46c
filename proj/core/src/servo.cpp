#include "mcscan/servo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mcscan/random.hpp"

namespace mcscan {

namespace {

double per_tick_limit(double speed, double tick_seconds) {
  return speed > 0.0 && std::isfinite(speed) ? speed * tick_seconds : std::numeric_limits<double>::infinity();
}

RigidTransform perturb(const RigidTransform& pose, Rng& rng, double sigma_t, double sigma_r) {
  const Vec3 dt(rng.normal(sigma_t), rng.normal(sigma_t), rng.normal(sigma_t));
  const Vec3 dr(rng.normal(sigma_r), rng.normal(sigma_r), rng.normal(sigma_r));
  Mat3 r = pose.rotation();
  if (dr.norm() > 0.0) r = Eigen::AngleAxisd(dr.norm(), dr.normalized()).toRotationMatrix() * r;
  return {r, pose.translation() + dt};
}

enum class StreamTag : std::uint64_t { Marker = 1, Tracker = 2, Frame = 3 };

std::uint64_t stream_seed(std::uint64_t seed, StreamTag tag, std::uint64_t tick) {
  return hash_mix(seed, static_cast<std::uint64_t>(tag), tick);
}

}  // namespace

// --- Robot -------------------------------------------------------------------

VirtualRobot::VirtualRobot(const RigidTransform& T_B_E, const RobotLimits& limits) : pose_(T_B_E), limits_(limits) {
  if (limits.latency_ticks < 0) throw Error("robot: latency must be non-negative");
  if (!(limits.tick_seconds > 0.0)) throw Error("robot: tick length must be positive");
}

VirtualRobot::Step VirtualRobot::command(const RigidTransform& target) {
  Step step;
  step.commanded = target;
  pending_.push_back(target);
  if (static_cast<int>(pending_.size()) <= limits_.latency_ticks) {
    step.executed = pose_;
    return step;
  }
  const RigidTransform goal = pending_.front();
  pending_.pop_front();

  const double max_lin = per_tick_limit(limits_.max_linear_speed, limits_.tick_seconds);
  const double max_ang = per_tick_limit(limits_.max_angular_speed, limits_.tick_seconds);

  Vec3 dt = goal.translation() - pose_.translation();
  const double lin = dt.norm();
  if (lin > max_lin) {
    dt *= max_lin / lin;
    step.saturated = true;
  }
  Mat3 r = goal.rotation();
  const Eigen::AngleAxisd rel(pose_.rotation().transpose() * goal.rotation());
  double ang = rel.angle();
  if (ang > max_ang) {
    ang = max_ang;
    r = pose_.rotation() * Eigen::AngleAxisd(ang, rel.axis()).toRotationMatrix();
    step.saturated = true;
  }
  // Re-project every tick so that rounding never accumulates in the integrated pose.
  pose_ = RigidTransform(r, pose_.translation() + dt).orthonormalized();
  step.executed = pose_;
  step.linear = dt.norm();
  step.angular = ang;
  return step;
}

// --- Control law -------------------------------------------------------------

RigidTransform compensation_from_increment(const Vec3& dx, const RigidTransform& T_C_M,
                                           const FrameCalibration& calib) {
  const RigidTransform& T_M_D = calib.T_M_D;
  const RigidTransform T_C_D = T_C_M * T_M_D;
  // S shares its origin with D and its orientation with the camera.
  const RigidTransform T_D_S = RigidTransform::rotation(T_C_D.rotation().transpose());
  const RigidTransform T_S_Sstar = RigidTransform::translation(dx);
  const RigidTransform T_Sstar_Dstar = T_D_S.inverse();
  const RigidTransform T_Dstar_Mstar = T_M_D.inverse();
  return T_M_D * T_D_S * T_S_Sstar * T_Sstar_Dstar * T_Dstar_Mstar;
}

RigidTransform compensation_step(const RespiratoryModel& model, const MotionBasis& basis, double t,
                                 const RigidTransform& T_C_M, const FrameCalibration& calib, int lookahead) {
  const Vec3 dx = predict_displacement(model, basis, t + lookahead) - predict_displacement(model, basis, t);
  return compensation_from_increment(dx, T_C_M, calib);
}

RigidTransform scanning_step(const RigidTransform& T_C_M, const RigidTransform& T_C_Mstar, const RigidTransform& comp,
                             CompensationMode mode) {
  const RigidTransform relative = T_C_M.inverse() * T_C_Mstar;
  return mode == CompensationMode::AsPrinted ? comp * relative : relative;
}

RigidTransform end_effector_target(const RigidTransform& T_B_E, const FrameCalibration& calib,
                                   const RigidTransform& scan, const RigidTransform& comp) {
  return T_B_E * calib.T_E_M * scan * comp * calib.T_E_M.inverse();
}

// --- Closed loop -------------------------------------------------------------

namespace {

ScanLog run_loop(const ScanSetup& setup, const ScanTrajectory& trajectory, const LearnedMotion& learned,
                 const ServoConfig& config) {
  if (trajectory.waypoints.empty()) throw Error("run_scan: empty trajectory");
  if (!learned.fit.model.is_valid()) throw Error("run_scan: motion model must be fitted before scanning");
  setup.calib.validate();

  const bool compensate = config.compensation;
  RespiratoryModel model = learned.fit.model;
  const MotionBasis& basis = learned.basis;
  OnlinePhaseUpdater updater(config.phase);
  Rng marker_rng(stream_seed(config.seed, StreamTag::Marker, 0));

  auto desired_at = [&](std::size_t cursor, double t) {
    const RigidTransform& ref = trajectory.waypoints[cursor].desired_marker;
    return compensate ? RigidTransform::translation(predict_displacement(model, basis, t)) * ref : ref;
  };

  const RigidTransform T_B_C = setup.T_C_B.inverse();
  const RigidTransform T_M_E = setup.calib.T_E_M.inverse();
  VirtualRobot robot(T_B_C * desired_at(0, config.start_time) * T_M_E, setup.robot);

  ScanLog log;
  log.basis = basis;
  std::size_t cursor = 0;
  int saturated_run = 0;
  const bool dwell = config.capture == CapturePolicy::EveryTick;
  const int tick_budget = dwell ? config.dwell_ticks : config.max_ticks;
  if (dwell && config.dwell_ticks < 1) throw Error("run_dwell: dwell_ticks must be positive");

  for (int tick = 0; tick < tick_budget; ++tick) {
    const double t = config.start_time + tick;
    TickRecord rec;
    rec.t = t;
    rec.tissue_pose = tissue_pose_at(setup.ground_truth, t);
    rec.marker_true = setup.T_C_B * robot.pose() * setup.calib.T_E_M;
    rec.marker_detected =
        perturb(rec.marker_true, marker_rng, config.marker_sigma_translation, config.marker_sigma_rotation);

    if (compensate && config.online_update) {
      const TrackedGrid grid = observe_grid(setup.phantom, setup.ground_truth, setup.motion_region, t, setup.tracker,
                                            stream_seed(config.seed, StreamTag::Tracker, static_cast<std::uint64_t>(tick)));
      const Vec3 position = -aggregate_displacement(grid);
      updater.push(t, basis.primary(position));
      updater.update(model);
    }

    RigidTransform desired = desired_at(cursor, t);
    rec.residual_position = (rec.marker_detected.translation() - desired.translation()).norm();
    rec.residual_angle = rotation_distance(rec.marker_detected, desired);
    const bool reached = rec.residual_position <= config.reach_position && rec.residual_angle <= config.reach_angle;

    if (dwell || reached) {
      CapturedFrame cap;
      cap.image = acquire(setup.phantom, rec.tissue_pose, rec.marker_true * setup.calib.T_M_D, setup.image,
                          setup.speckle, stream_seed(config.seed, StreamTag::Frame, static_cast<std::uint64_t>(tick)), t);
      cap.marker_detected = rec.marker_detected;
      cap.model = model;
      cap.waypoint = static_cast<int>(cursor);
      cap.line = trajectory.waypoints[cursor].line;
      cap.t = t;
      rec.frame = static_cast<int>(log.frames.size());
      log.frames.push_back(std::move(cap));
    }
    rec.waypoint = static_cast<int>(cursor);
    rec.model = model;

    if (!dwell && reached) {
      if (cursor + 1 == trajectory.waypoints.size()) {
        rec.commanded = robot.pose();
        rec.executed = robot.pose();
        log.ticks.push_back(rec);
        log.completed = true;
        return log;
      }
      ++cursor;
      desired = desired_at(cursor, t);
    }

    const RigidTransform comp =
        compensate ? compensation_step(model, basis, t, rec.marker_detected, setup.calib, config.lookahead)
                   : RigidTransform::identity();
    const RigidTransform scan = scanning_step(rec.marker_detected, desired, comp, config.mode);
    const RigidTransform target = end_effector_target(robot.pose(), setup.calib, scan, comp);
    const VirtualRobot::Step step = robot.command(target);

    rec.commanded = step.commanded;
    rec.executed = step.executed;
    rec.linear_step = step.linear;
    rec.angular_step = step.angular;
    rec.saturated = step.saturated;
    log.ticks.push_back(rec);

    saturated_run = step.saturated ? saturated_run + 1 : 0;
    if (saturated_run > config.saturation_abort_ticks) {
      log.aborted = true;
      log.diagnostic = "robot saturated for " + std::to_string(saturated_run) + " consecutive ticks at waypoint " +
                       std::to_string(cursor);
      throw Error("run_scan aborted: " + log.diagnostic);
    }
  }
  if (dwell) {
    log.completed = true;
    return log;
  }
  throw Error("run_scan aborted: final waypoint not reached within " + std::to_string(config.max_ticks) + " ticks");
}

}  // namespace

ScanLog run_scan(const ScanSetup& setup, const ScanTrajectory& trajectory, const LearnedMotion& learned,
                 const ServoConfig& config) {
  ServoConfig c = config;
  c.capture = CapturePolicy::OnArrival;
  return run_loop(setup, trajectory, learned, c);
}

ScanLog run_dwell(const ScanSetup& setup, const Waypoint& waypoint, const LearnedMotion& learned,
                  ServoConfig config) {
  config.capture = CapturePolicy::EveryTick;
  ScanTrajectory single;
  single.waypoints.push_back(waypoint);
  return run_loop(setup, single, learned, config);
}

RigidTransform transducer_in_tissue(const TickRecord& tick, const FrameCalibration& calib) {
  return tick.tissue_pose.inverse() * tick.marker_true * calib.T_M_D;
}

double StabilisationResult::mean() const {
  double s = 0.0;
  for (double v : ncc) s += v;
  return ncc.empty() ? 0.0 : s / static_cast<double>(ncc.size());
}

double StabilisationResult::min() const {
  return ncc.empty() ? 0.0 : *std::min_element(ncc.begin(), ncc.end());
}

StabilisationResult stabilisation_experiment(const ScanSetup& setup, const Waypoint& dwell, const LearnedMotion& learned,
                                             const ServoConfig& config, int duration_ticks) {
  ServoConfig c = config;
  c.dwell_ticks = duration_ticks;
  StabilisationResult result;
  result.log = run_dwell(setup, dwell, learned, c);

  const double exhale = setup.ground_truth.model.b > 0.0 ? setup.ground_truth.next_exhale(c.start_time) : c.start_time;
  std::size_t ref = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < result.log.frames.size(); ++i) {
    const double d = std::abs(result.log.frames[i].t - exhale);
    if (d < best) {
      best = d;
      ref = i;
    }
  }
  const UltrasoundFrame& reference = result.log.frames[ref].image;
  result.reference_time = result.log.frames[ref].t;
  for (const CapturedFrame& f : result.log.frames) {
    result.times.push_back(f.t);
    result.ncc.push_back(ncc(reference, f.image));
  }
  return result;
}

}  // namespace mcscan
