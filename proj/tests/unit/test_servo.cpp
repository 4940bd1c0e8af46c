#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mcscan/experiments.hpp"
#include "mcscan/servo.hpp"
#include "support.hpp"

using namespace mcscan;

namespace {

struct World {
  ExperimentConfig config = default_config();
  ScanSetup setup;
  LearnedMotion exact;
  Waypoint dwell;
};

World world(const std::string& profile, const Regime& regime, double b_override = -1.0) {
  World w;
  MotionProfile p = w.config.profile(profile);
  if (b_override >= 0.0) p.b = b_override;
  w.setup = make_setup(w.config, w.config.phantom("flat"), p, axis_from_name(p.axis), regime, 9);
  w.exact = exact_motion(w.setup.ground_truth);
  w.dwell = dwell_waypoint(w.config, w.setup);
  return w;
}

ServoConfig servo(const World& w, const Regime& r, bool on, int dwell_ticks = 0) {
  ServoConfig s = make_servo(w.config, r, on, 77, 300.0);
  s.dwell_ticks = dwell_ticks;
  return s;
}

}  // namespace

// --- Compensation algebra --------------------------------------------------------

TEST(Compensation, ZeroIncrementIsIdentity) {
  std::mt19937_64 g(51);
  const FrameCalibration c = default_config().calib;
  for (int i = 0; i < 100; ++i) {
    const RigidTransform comp = compensation_from_increment(Vec3::Zero(), test::random_transform(g), c);
    EXPECT_LT(max_abs_difference(comp, RigidTransform::identity()), 1e-12);
  }
  const RespiratoryModel still{0.0, 0.0, 75.0, 0.3, 3};
  EXPECT_LT(max_abs_difference(compensation_step(still, MotionBasis{}, 3.0, test::random_transform(g), c),
                               RigidTransform::identity()),
            1e-12);
}

TEST(Compensation, TranslatesMarkerInCameraFrame) {
  // Oracle: T_C_M * comp == translation(dx) * T_C_M, by direct matrix products.
  std::mt19937_64 g(52);
  FrameCalibration c = default_config().calib;
  for (int i = 0; i < 1000; ++i) {
    c.T_M_D = test::random_transform(g, 80.0);
    const RigidTransform T_C_M = test::random_transform(g, 300.0);
    const Vec3 dx = 5.0 * test::random_unit(g);
    const RigidTransform comp = compensation_from_increment(dx, T_C_M, c);
    Mat4 Tdx = Mat4::Identity();
    Tdx.block<3, 1>(0, 3) = dx;
    EXPECT_LT(test::max_abs(test::H(T_C_M) * test::H(comp), Tdx * test::H(T_C_M)), 1e-9);
    EXPECT_NEAR(comp.angle(), 0.0, 1e-7);
    EXPECT_NEAR(comp.translation().norm(), dx.norm(), 1e-9);
  }
}

TEST(Compensation, StepUsesModelIncrement) {
  const RespiratoryModel m{0.0, 3.0, 75.0, 0.4, 3};
  const RigidTransform T_C_M = RigidTransform::identity();
  FrameCalibration c;
  for (double t : {0.0, 10.0, 33.3}) {
    const RigidTransform comp = compensation_step(m, MotionBasis{}, t, T_C_M, c);
    const double dz = m.evaluate(t + 1) - m.evaluate(t);
    EXPECT_LT((comp.translation() - Vec3(dz, 0, 0)).norm(), 1e-12);
    const RigidTransform comp2 = compensation_step(m, MotionBasis{}, t, T_C_M, c, 3);
    EXPECT_LT((comp2.translation() - Vec3(m.evaluate(t + 3) - m.evaluate(t), 0, 0)).norm(), 1e-12);
  }
}

TEST(ControlLaw, ScanningStepAndEndEffectorMatchMatrixProducts) {
  std::mt19937_64 g(53);
  FrameCalibration c = default_config().calib;
  for (int i = 0; i < 500; ++i) {
    const RigidTransform T_C_M = test::random_transform(g), T_C_Ms = test::random_transform(g);
    const RigidTransform comp = test::random_transform(g, 5.0), T_B_E = test::random_transform(g);
    c.T_E_M = test::random_transform(g, 50.0);
    const Mat4 rel = test::H(T_C_M).inverse() * test::H(T_C_Ms);
    const RigidTransform as_printed = scanning_step(T_C_M, T_C_Ms, comp, CompensationMode::AsPrinted);
    const RigidTransform single = scanning_step(T_C_M, T_C_Ms, comp, CompensationMode::SingleApplication);
    EXPECT_LT(test::max_abs(test::H(as_printed), test::H(comp) * rel), 1e-9);
    EXPECT_LT(test::max_abs(test::H(single), rel), 1e-9);
    const Mat4 ee = test::H(T_B_E) * test::H(c.T_E_M) * test::H(single) * test::H(comp) * test::H(c.T_E_M).inverse();
    EXPECT_LT(test::max_abs(test::H(end_effector_target(T_B_E, c, single, comp)), ee), 1e-8);
  }
}

TEST(ControlLaw, ReachesDesiredMarkerInOneTick) {
  // With comp = identity the target puts the marker exactly on T_C_M*.
  std::mt19937_64 g(54);
  const FrameCalibration c = default_config().calib;
  for (int i = 0; i < 100; ++i) {
    const RigidTransform T_C_B = test::random_transform(g), T_B_E = test::random_transform(g);
    const RigidTransform T_C_M = T_C_B * T_B_E * c.T_E_M, T_C_Ms = test::random_transform(g);
    const RigidTransform target =
        end_effector_target(T_B_E, c, scanning_step(T_C_M, T_C_Ms, {}), RigidTransform::identity());
    EXPECT_LT(max_abs_difference(T_C_B * target * c.T_E_M, T_C_Ms), 1e-8);
  }
}

// --- Robot ---------------------------------------------------------------------

TEST(Robot, RespectsRateLimits) {
  std::mt19937_64 g(55);
  RobotLimits lim;
  VirtualRobot robot(RigidTransform::identity(), lim);
  const double max_lin = lim.max_linear_speed * lim.tick_seconds;
  const double max_ang = lim.max_angular_speed * lim.tick_seconds;
  for (int i = 0; i < 500; ++i) {
    const RigidTransform before = robot.pose();
    const auto s = robot.command(test::random_transform(g, 10.0));
    EXPECT_LE((robot.pose().translation() - before.translation()).norm(), max_lin + 1e-12);
    EXPECT_LE(rotation_distance(before, robot.pose()), max_ang + 1e-9);
    EXPECT_TRUE(robot.pose().is_valid());
    EXPECT_TRUE(s.saturated);
  }
  // A small move is executed exactly.
  const RigidTransform goal = robot.pose() * RigidTransform::translation(0.1, 0, 0);
  const auto s = robot.command(goal);
  EXPECT_FALSE(s.saturated);
  EXPECT_LT(max_abs_difference(robot.pose(), goal), 1e-12);
}

TEST(Robot, Latency) {
  RobotLimits lim = RobotLimits::ideal();
  lim.latency_ticks = 2;
  VirtualRobot robot(RigidTransform::identity(), lim);
  std::vector<RigidTransform> cmds;
  for (int i = 0; i < 6; ++i) cmds.push_back(RigidTransform::translation(i + 1.0, 0, 0));
  for (int i = 0; i < 6; ++i) {
    robot.command(cmds[static_cast<std::size_t>(i)]);
    const RigidTransform expected = i < 2 ? RigidTransform::identity() : cmds[static_cast<std::size_t>(i - 2)];
    EXPECT_LT(max_abs_difference(robot.pose(), expected), 1e-15) << i;
  }
  lim.latency_ticks = -1;
  EXPECT_THROW(VirtualRobot(RigidTransform::identity(), lim), Error);
}

// --- Closed loop -----------------------------------------------------------------

TEST(Loop, StaticTissueSameWithAndWithoutCompensation) {
  for (const Regime& r : {Regime::ideal(), Regime::calibrated()}) {
    const World w = world("P1", r, 0.0);
    const ScanLog on = run_dwell(w.setup, w.dwell, w.exact, servo(w, r, true, 60));
    const ScanLog off = run_dwell(w.setup, w.dwell, w.exact, servo(w, r, false, 60));
    ASSERT_EQ(on.ticks.size(), off.ticks.size());
    for (std::size_t i = 0; i < on.ticks.size(); ++i) {
      EXPECT_LT(max_abs_difference(on.ticks[i].executed, off.ticks[i].executed), 1e-9) << r.name << " " << i;
    }
  }
}

TEST(Loop, IdealDwellHoldsTissueRelativePose) {
  for (const std::string p : {"P1", "P2", "P3"}) {
    const World w = world(p, Regime::ideal());
    ServoConfig s = servo(w, Regime::ideal(), true, 300);
    const ScanLog log = run_dwell(w.setup, w.dwell, w.exact, s);
    const RigidTransform first = transducer_in_tissue(log.ticks.front(), w.setup.calib);
    double worst = 0.0;
    for (const TickRecord& t : log.ticks) worst = std::max(worst, max_abs_difference(transducer_in_tissue(t, w.setup.calib), first));
    EXPECT_LT(worst, 1e-6) << p;
  }
}

TEST(Loop, UncompensatedDwellOscillatesByAmplitude) {
  const World w = world("P3", Regime::ideal());
  const ScanLog log = run_dwell(w.setup, w.dwell, w.exact, servo(w, Regime::ideal(), false, 300));
  double lo = 1e9, hi = -1e9;
  const Vec3 axis = w.setup.ground_truth.axis;
  for (const TickRecord& t : log.ticks) {
    const double s = transducer_in_tissue(t, w.setup.calib).translation().dot(axis);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  EXPECT_NEAR(hi - lo, w.setup.ground_truth.model.b, 0.05);
}

TEST(Loop, AsPrintedErrorBoundedBySlope) {
  // The doubled compensation term overshoots by at most one model increment.
  for (const std::string p : {"P1", "P3"}) {
    const World w = world(p, Regime::ideal());
    ServoConfig s = servo(w, Regime::ideal(), true, 300);
    s.mode = CompensationMode::AsPrinted;
    const ScanLog log = run_dwell(w.setup, w.dwell, w.exact, s);
    const RigidTransform first = transducer_in_tissue(log.ticks.front(), w.setup.calib);
    const double slope = max_model_slope(w.setup.ground_truth.model);
    double worst = 0.0;
    for (const TickRecord& t : log.ticks)
      worst = std::max(worst, (transducer_in_tissue(t, w.setup.calib).translation() - first.translation()).norm());
    EXPECT_LE(worst, slope + 1e-6) << p;
    EXPECT_GT(worst, 1e-3) << p;
  }
}

TEST(Loop, ScanVisitsEveryWaypoint) {
  const World w = world("P2", Regime::ideal());
  const ScanTrajectory tr = plan_scan(w.config, w.setup);
  ServoConfig s = servo(w, Regime::ideal(), true);
  const ScanLog log = run_scan(w.setup, tr, w.exact, s);
  EXPECT_TRUE(log.completed);
  ASSERT_EQ(log.frames.size(), tr.waypoints.size());
  for (std::size_t i = 0; i < log.frames.size(); ++i) {
    EXPECT_EQ(log.frames[i].waypoint, static_cast<int>(i));
    EXPECT_EQ(log.frames[i].line, tr.waypoints[i].line);
  }
  for (const TickRecord& t : log.ticks) {
    if (t.frame < 0) continue;
    EXPECT_LE(t.residual_position, s.reach_position);
    EXPECT_LE(t.residual_angle, s.reach_angle);
  }
}

TEST(Loop, LimitedRobotStillConverges) {
  const World w = world("P1", Regime::calibrated());
  const ScanTrajectory tr = plan_scan(w.config, w.setup);
  const ScanLog log = run_scan(w.setup, tr, w.exact, servo(w, Regime::calibrated(), true));
  EXPECT_TRUE(log.completed);
  const double max_lin = w.setup.robot.max_linear_speed * w.setup.robot.tick_seconds;
  for (const TickRecord& t : log.ticks) EXPECT_LE(t.linear_step, max_lin + 1e-9);
}

TEST(Loop, SaturationAborts) {
  World w = world("P1", Regime::calibrated());
  w.setup.robot.max_linear_speed = 0.01;
  ScanTrajectory tr;
  Waypoint a = w.dwell, b = w.dwell;
  b.desired_marker = RigidTransform::translation(30, 0, 0) * b.desired_marker;
  tr.waypoints = {a, b};
  ServoConfig s = servo(w, Regime::ideal(), false);
  s.saturation_abort_ticks = 10;
  try {
    run_scan(w.setup, tr, w.exact, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("saturated"), std::string::npos) << e.what();
  }
  s.saturation_abort_ticks = 100000;
  s.max_ticks = 50;
  EXPECT_THROW(run_scan(w.setup, tr, w.exact, s), Error);
}

TEST(Loop, Deterministic) {
  const World w = world("P2", Regime::calibrated());
  const ServoConfig s = servo(w, Regime::calibrated(), true, 80);
  const ScanLog a = run_dwell(w.setup, w.dwell, w.exact, s);
  const ScanLog b = run_dwell(w.setup, w.dwell, w.exact, s);
  ASSERT_EQ(a.ticks.size(), b.ticks.size());
  for (std::size_t i = 0; i < a.ticks.size(); ++i) {
    EXPECT_EQ(a.ticks[i].executed.row_major_3x4(), b.ticks[i].executed.row_major_3x4());
    EXPECT_EQ(a.frames[i].image.intensities, b.frames[i].image.intensities);
  }
}

TEST(Stabilisation, StaticTissueScoresOne) {
  const World w = world("P1", Regime::ideal(), 0.0);
  const StabilisationResult r = stabilisation_experiment(w.setup, w.dwell, w.exact, servo(w, Regime::ideal(), true), 50);
  EXPECT_EQ(r.ncc.size(), 50u);
  EXPECT_DOUBLE_EQ(r.min(), 1.0);
}
