#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mcscan/config.hpp"
#include "mcscan/motion.hpp"
#include "mcscan/planner.hpp"
#include "mcscan/reconstruction.hpp"
#include "mcscan/servo.hpp"

namespace mcscan {

inline constexpr const char* kVersion = "0.1.0";

// --- World assembly ----------------------------------------------------------

ScanSetup make_setup(const ExperimentConfig& config, const PhantomSpec& phantom, const MotionProfile& profile,
                     const Vec3& axis, const Regime& regime, std::uint64_t speckle_seed);

ServoConfig make_servo(const ExperimentConfig& config, const Regime& regime, bool compensation, std::uint64_t seed,
                       double start_time);

/// Observes the tracking grid for `frames` frames starting at t = 0 and fits
/// the motion model to the aggregated positions.
LearnedMotion learn_from_tracking(const ScanSetup& setup, int frames, int n, std::uint64_t seed);

/// Waypoint over the tumour centre, oriented like the scan trajectory.
Waypoint dwell_waypoint(const ExperimentConfig& config, const ScanSetup& setup);

ScanTrajectory plan_scan(const ExperimentConfig& config, const ScanSetup& setup);

// --- E1: parameter recovery --------------------------------------------------

struct E1Trial {
  std::string regime;
  std::string profile;
  std::string axis;
  int trial = 0;
  bool ok = false;
  std::string error;
  FitReport fit;
};

struct E1Row {
  std::string regime;
  std::string profile;
  double tau_true = 0.0;
  double b_true = 0.0;
  int trials = 0;
  int failures = 0;
  double tau_mean = 0.0;
  double tau_std = 0.0;
  double b_mean = 0.0;
  double b_std = 0.0;
};

struct E1Result {
  std::vector<E1Trial> trials;
  std::vector<E1Row> rows;
};

E1Result run_e1_parameter_recovery(const ExperimentConfig& config);

// --- E2: stabilisation -------------------------------------------------------

struct E2Series {
  std::string regime;
  std::string profile;
  bool compensation = true;
  std::vector<double> times;
  std::vector<double> ncc;
  double reference_time = 0.0;
  double mean = 0.0;
  double min = 0.0;
};

struct E2Result {
  std::vector<E2Series> series;

  /// Throws Error when the series is absent.
  const E2Series& find(const std::string& regime, const std::string& profile, bool compensation) const;
};

/// Called with a run tag and the dwell log before the log is discarded.
using DwellObserver = std::function<void(const std::string& tag, const ScanLog& log)>;

E2Result run_e2_stabilisation(const ExperimentConfig& config, const DwellObserver& observer = {});

// --- E3: tumour scan ---------------------------------------------------------

struct E3Row {
  std::string phantom;
  std::string profile;
  std::string regime;
  bool compensation = true;
  bool ok = false;
  std::string error;
  double location_error = 0.0;
  double diameter_error = 0.0;
  double mesh_volume = 0.0;
  double truth_volume = 0.0;
  bool watertight = false;
  int line = -1;
  int frames_used = 0;
  int contours = 0;
  int ticks = 0;
  int captured = 0;
};

struct E3Result {
  std::vector<E3Row> rows;

  const E3Row& find(const std::string& phantom, const std::string& profile, const std::string& regime,
                    bool compensation) const;
};

struct E3Artifacts {
  std::string tag;
  const ScanTrajectory* trajectory = nullptr;
  const ScanLog* log = nullptr;
  const Reconstruction* reconstruction = nullptr;  // null when the scan failed
  const ScoreReport* score = nullptr;
  Ellipsoid truth;
};

using ScanObserver = std::function<void(const E3Artifacts&)>;

E3Result run_e3_tumour_scan(const ExperimentConfig& config, const ScanObserver& observer = {});

// --- Output ------------------------------------------------------------------

std::string e1_trials_csv(const E1Result& r);
std::string e1_table_csv(const E1Result& r);
std::string e1_table_text(const E1Result& r);
std::string e2_ncc_csv(const E2Result& r);
std::string e2_summary_csv(const E2Result& r);
std::string e3_table_csv(const E3Result& r);
std::string e3_table_text(const E3Result& r);

/// Runs `verb` (e1, e2, e3 or all) and writes every result file plus
/// manifest.json under `out_dir`. Returns the written paths relative to
/// `out_dir`, manifest last.
std::vector<std::string> run_and_write(const std::string& verb, const ExperimentConfig& config,
                                       const std::filesystem::path& out_dir);

}  // namespace mcscan
