#include "mcscan/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "json.hpp"
#include "mcscan/io.hpp"
#include "mcscan/random.hpp"

namespace mcscan {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

MotionGroundTruth ground_truth(const MotionProfile& p, const Vec3& axis, int n) {
  MotionGroundTruth gt;
  gt.model = {p.z0, p.b, p.tau, p.phi, n};
  gt.axis = axis.normalized();
  return gt;
}

std::string tag_of(std::initializer_list<std::string> parts) {
  std::string t;
  for (const std::string& p : parts) {
    if (!t.empty()) t += '_';
    t += p;
  }
  return t;
}

const char* arm(bool compensation) { return compensation ? "on" : "off"; }

}  // namespace

// --- World assembly ----------------------------------------------------------

ScanSetup make_setup(const ExperimentConfig& config, const PhantomSpec& phantom, const MotionProfile& profile,
                     const Vec3& axis, const Regime& regime, std::uint64_t speckle_seed) {
  ScanSetup s;
  s.phantom = phantom.build();
  s.ground_truth = ground_truth(profile, axis, config.model_degree);
  s.calib = config.calib;
  s.T_C_B = config.T_C_B;
  s.robot = regime.limited_robot ? config.robot : RobotLimits::ideal();
  s.robot.tick_seconds = config.robot.tick_seconds;
  s.image = config.image;
  s.speckle = config.speckle;
  s.speckle.enabled = regime.speckle;
  s.speckle.seed = speckle_seed;
  if (!regime.speckle) s.speckle.electronic_sigma = 0.0;
  const Vec3 c = phantom.tumour.center;
  const double h = config.tracking_half_width;
  s.motion_region = {c.x() - h, c.x() + h, c.y() - h, c.y() + h, config.tracking_nx, config.tracking_ny};
  s.tracker.sigma = regime.tracker_noise ? profile.tracker_sigma : 0.0;
  s.tracker.outlier_rate = regime.outlier_rate;
  s.tracker.detection_probability = regime.detection_probability;
  return s;
}

ServoConfig make_servo(const ExperimentConfig& config, const Regime& regime, bool compensation, std::uint64_t seed,
                       double start_time) {
  ServoConfig s = config.servo;
  s.compensation = compensation;
  s.marker_sigma_translation = regime.marker_sigma_translation;
  s.marker_sigma_rotation = regime.marker_sigma_rotation;
  s.seed = seed;
  s.start_time = start_time;
  return s;
}

LearnedMotion learn_from_tracking(const ScanSetup& setup, int frames, int n, std::uint64_t seed) {
  std::vector<double> times;
  std::vector<Vec3> positions;
  times.reserve(static_cast<std::size_t>(frames));
  positions.reserve(static_cast<std::size_t>(frames));
  for (int k = 0; k < frames; ++k) {
    const TrackedGrid grid = observe_grid(setup.phantom, setup.ground_truth, setup.motion_region, k, setup.tracker,
                                          hash_mix(seed, static_cast<std::uint64_t>(k)));
    times.push_back(k);
    positions.push_back(-aggregate_displacement(grid));
  }
  return learn_motion(times, positions, n);
}

Waypoint dwell_waypoint(const ExperimentConfig& config, const ScanSetup& setup) {
  (void)config;
  ZigzagPath path;
  path.points.push_back(setup.phantom.tumour.center.head<2>());
  path.line.push_back(0);
  path.sweep_axis = Vec2::UnitX();
  return lift_to_poses(path, setup.phantom.surface, setup.calib).waypoints.front();
}

ScanTrajectory plan_scan(const ExperimentConfig& config, const ScanSetup& setup) {
  const Vec3 c = setup.phantom.tumour.center;
  const ScanRegion region = ScanRegion::rectangle(c.x() - config.e3.half_x, c.x() + config.e3.half_x,
                                                  c.y() - config.e3.half_y, c.y() + config.e3.half_y, config.e3.start);
  const ZigzagPath path = plan_zigzag(region, config.image.width_mm(), config.e3.step);
  LiftOptions lift;
  lift.contact_offset = config.e3.contact_offset;
  return lift_to_poses(path, setup.phantom.surface, setup.calib, lift);
}

// --- E1 ----------------------------------------------------------------------

E1Result run_e1_parameter_recovery(const ExperimentConfig& config) {
  config.validate();
  E1Result result;
  std::uint64_t index = 0;
  const PhantomSpec& phantom = config.phantoms.front();
  for (const Regime& regime : config.regimes) {
    for (const MotionProfile& profile : config.profiles) {
      E1Row row;
      row.regime = regime.name;
      row.profile = profile.name;
      row.tau_true = profile.tau;
      row.b_true = profile.b;
      std::vector<double> taus, bs;
      for (const std::string& axis : config.e1.axes) {
        for (int k = 0; k < config.e1.trials_per_axis; ++k) {
          const std::uint64_t seed = derive_seed(config.seed, index++);
          E1Trial trial;
          trial.regime = regime.name;
          trial.profile = profile.name;
          trial.axis = axis;
          trial.trial = k;
          try {
            const ScanSetup setup = make_setup(config, phantom, profile, axis_from_name(axis), regime, 0);
            trial.fit = learn_from_tracking(setup, profile.learn_frames, config.model_degree, seed).fit;
            trial.ok = true;
            taus.push_back(trial.fit.model.tau);
            bs.push_back(trial.fit.model.b);
          } catch (const FitError& e) {
            trial.error = e.what();
            trial.fit.model = e.last_iterate;
          } catch (const Error& e) {
            trial.error = e.what();
          }
          ++row.trials;
          if (!trial.ok) ++row.failures;
          result.trials.push_back(std::move(trial));
        }
      }
      row.tau_mean = mean_of(taus);
      row.tau_std = sample_std(taus);
      row.b_mean = mean_of(bs);
      row.b_std = sample_std(bs);
      result.rows.push_back(row);
    }
  }
  return result;
}

// --- E2 ----------------------------------------------------------------------

const E2Series& E2Result::find(const std::string& regime, const std::string& profile, bool compensation) const {
  for (const E2Series& s : series)
    if (s.regime == regime && s.profile == profile && s.compensation == compensation) return s;
  throw Error("e2: no series for " + regime + "/" + profile + "/" + arm(compensation));
}

E2Result run_e2_stabilisation(const ExperimentConfig& config, const DwellObserver& observer) {
  config.validate();
  E2Result result;
  const PhantomSpec& phantom = config.phantom(config.e2.phantom);
  std::vector<bool> arms{true, false};
  if (!config.compensation) arms = {false};
  std::uint64_t index = 0;
  for (const Regime& regime : config.regimes) {
    for (const MotionProfile& profile : config.profiles) {
      const std::uint64_t seed = derive_seed(config.seed, 1000 + index++);
      const ScanSetup setup =
          make_setup(config, phantom, profile, axis_from_name(profile.axis), regime, derive_seed(seed, 2));
      const LearnedMotion learned =
          learn_from_tracking(setup, profile.learn_frames, config.model_degree, derive_seed(seed, 0));
      const Waypoint dwell = dwell_waypoint(config, setup);
      const int duration = static_cast<int>(std::ceil(config.e2.cycles * profile.tau));
      for (bool on : arms) {
        const ServoConfig servo = make_servo(config, regime, on, derive_seed(seed, 1), profile.learn_frames);
        StabilisationResult stab = stabilisation_experiment(setup, dwell, learned, servo, duration);
        E2Series s;
        s.regime = regime.name;
        s.profile = profile.name;
        s.compensation = on;
        s.times = stab.times;
        s.ncc = stab.ncc;
        s.reference_time = stab.reference_time;
        s.mean = stab.mean();
        s.min = stab.min();
        if (observer) observer(tag_of({"e2", regime.name, profile.name, arm(on)}), stab.log);
        result.series.push_back(std::move(s));
      }
    }
  }
  return result;
}

// --- E3 ----------------------------------------------------------------------

const E3Row& E3Result::find(const std::string& phantom, const std::string& profile, const std::string& regime,
                            bool compensation) const {
  for (const E3Row& r : rows)
    if (r.phantom == phantom && r.profile == profile && r.regime == regime && r.compensation == compensation) return r;
  throw Error("e3: no row for " + phantom + "/" + profile + "/" + regime + "/" + arm(compensation));
}

E3Result run_e3_tumour_scan(const ExperimentConfig& config, const ScanObserver& observer) {
  config.validate();
  E3Result result;
  std::uint64_t index = 0;
  for (const std::string& phantom_name : config.e3.phantoms) {
    const PhantomSpec& phantom = config.phantom(phantom_name);
    for (const Regime& regime : config.regimes) {
      for (const MotionProfile& profile : config.profiles) {
        const std::uint64_t seed = derive_seed(config.seed, 2000 + index++);
        const ScanSetup setup =
            make_setup(config, phantom, profile, axis_from_name(profile.axis), regime, derive_seed(seed, 2));
        std::vector<bool> arms;
        if (config.compensation) {
          arms.push_back(true);
          if (profile.name == config.e3.ablation_profile) arms.push_back(false);
        } else {
          arms.push_back(false);
        }
        const ScanTrajectory trajectory = plan_scan(config, setup);
        LearnedMotion learned;
        std::string learn_error;
        try {
          learned = learn_from_tracking(setup, profile.learn_frames, config.model_degree, derive_seed(seed, 0));
        } catch (const Error& e) {
          learn_error = e.what();
        }
        for (bool on : arms) {
          E3Row row;
          row.phantom = phantom.name;
          row.profile = profile.name;
          row.regime = regime.name;
          row.compensation = on;
          row.truth_volume = setup.phantom.tumour.volume();
          E3Artifacts art;
          art.tag = tag_of({"e3", phantom.name, regime.name, profile.name, arm(on)});
          art.trajectory = &trajectory;
          art.truth = setup.phantom.tumour;
          ScanLog log;
          Reconstruction rec;
          ScoreReport sc;
          if (!learn_error.empty()) {
            row.error = "motion learning failed: " + learn_error;
          } else {
            try {
              const ServoConfig servo = make_servo(config, regime, on, derive_seed(seed, 1), profile.learn_frames);
              log = run_scan(setup, trajectory, learned, servo);
              row.ticks = static_cast<int>(log.ticks.size());
              row.captured = static_cast<int>(log.frames.size());
              ReconstructionOptions ro;
              ro.segmentation = config.segmentation;
              ro.motion_corrected = on;
              rec = reconstruct_from_scan(log, setup.calib, ro);
              sc = score(rec.mesh, setup.phantom.tumour);
              row.ok = true;
              row.location_error = sc.location_error;
              row.diameter_error = sc.diameter_error;
              row.mesh_volume = rec.mesh.volume();
              row.watertight = rec.mesh.is_watertight();
              row.line = rec.line;
              row.frames_used = static_cast<int>(rec.frames.size());
              row.contours = rec.detected_contours;
              art.reconstruction = &rec;
              art.score = &sc;
            } catch (const Error& e) {
              row.error = e.what();
            }
          }
          art.log = &log;
          if (observer) observer(art);
          result.rows.push_back(std::move(row));
        }
      }
    }
  }
  return result;
}

// --- Output ------------------------------------------------------------------

std::string e1_trials_csv(const E1Result& r) {
  std::string out = "regime,profile,axis,trial,ok,tau,b,z0,phi,residual_rms,iterations,error\n";
  for (const E1Trial& t : r.trials) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},\"{}\"\n", t.regime, t.profile, t.axis, t.trial, t.ok ? 1 : 0,
                       format_double(t.fit.model.tau), format_double(t.fit.model.b), format_double(t.fit.model.z0),
                       format_double(t.fit.model.phi), format_double(t.fit.residual_rms), t.fit.iterations, t.error);
  }
  return out;
}

std::string e1_table_csv(const E1Result& r) {
  std::string out = "regime,profile,tau_true,b_true,trials,failures,tau_mean,tau_std,b_mean,b_std\n";
  for (const E1Row& row : r.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", row.regime, row.profile, format_double(row.tau_true),
                       format_double(row.b_true), row.trials, row.failures, format_double(row.tau_mean),
                       format_double(row.tau_std), format_double(row.b_mean), format_double(row.b_std));
  }
  return out;
}

std::string e1_table_text(const E1Result& r) {
  std::string out;
  std::string regime;
  for (const E1Row& row : r.rows) {
    if (row.regime != regime) {
      regime = row.regime;
      out += fmt::format("\n[{}]\n{:<8} {:>10} {:>8} {:>18} {:>14} {:>6}\n", regime, "profile", "tau", "b",
                         "tau_hat (frames)", "b_hat (mm)", "fail");
    }
    out += fmt::format("{:<8} {:>10.0f} {:>8.1f} {:>10.2f} ± {:<5.2f} {:>6.2f} ± {:<5.2f} {:>6}\n", row.profile,
                       row.tau_true, row.b_true, row.tau_mean, row.tau_std, row.b_mean, row.b_std, row.failures);
  }
  return out.empty() ? out : out.substr(1);
}

std::string e2_ncc_csv(const E2Result& r) {
  std::string out = "regime,profile,compensation,t,ncc\n";
  for (const E2Series& s : r.series)
    for (std::size_t i = 0; i < s.ncc.size(); ++i)
      out += fmt::format("{},{},{},{},{}\n", s.regime, s.profile, arm(s.compensation), format_double(s.times[i]),
                         format_double(s.ncc[i]));
  return out;
}

std::string e2_summary_csv(const E2Result& r) {
  std::string out = "regime,profile,compensation,frames,reference_time,mean_ncc,min_ncc\n";
  for (const E2Series& s : r.series)
    out += fmt::format("{},{},{},{},{},{},{}\n", s.regime, s.profile, arm(s.compensation), s.ncc.size(),
                       format_double(s.reference_time), format_double(s.mean), format_double(s.min));
  return out;
}

std::string e3_table_csv(const E3Result& r) {
  std::string out =
      "phantom,profile,regime,compensation,ok,location_error_mm,diameter_error_mm,mesh_volume,truth_volume,"
      "watertight,line,frames_used,contours,ticks,captured,error\n";
  for (const E3Row& row : r.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"\n", row.phantom, row.profile, row.regime,
                       arm(row.compensation), row.ok ? 1 : 0, format_double(row.location_error),
                       format_double(row.diameter_error), format_double(row.mesh_volume),
                       format_double(row.truth_volume), row.watertight ? 1 : 0, row.line, row.frames_used,
                       row.contours, row.ticks, row.captured, row.error);
  }
  return out;
}

std::string e3_table_text(const E3Result& r) {
  std::string out = fmt::format("{:<8} {:<8} {:<11} {:<4} {:>14} {:>14}\n", "phantom", "profile", "regime", "comp",
                                "location (mm)", "diameter (mm)");
  for (const E3Row& row : r.rows) {
    if (row.ok) {
      out += fmt::format("{:<8} {:<8} {:<11} {:<4} {:>14.3f} {:>14.3f}\n", row.phantom, row.profile, row.regime,
                         arm(row.compensation), row.location_error, row.diameter_error);
    } else {
      out += fmt::format("{:<8} {:<8} {:<11} {:<4} failed: {}\n", row.phantom, row.profile, row.regime,
                         arm(row.compensation), row.error);
    }
  }
  return out;
}

namespace {

class OutputWriter {
 public:
  explicit OutputWriter(std::filesystem::path root) : root_(std::move(root)) {}

  void write(const std::string& rel, const std::string& text) {
    write_text(root_ / rel, text);
    files_.push_back({rel, sha256_hex(text)});
  }
  const std::vector<std::pair<std::string, std::string>>& files() const { return files_; }

 private:
  std::filesystem::path root_;
  std::vector<std::pair<std::string, std::string>> files_;
};

void dump_frames(OutputWriter& out, const std::string& tag, const ScanLog& log) {
  for (std::size_t i = 0; i < log.frames.size(); ++i) {
    const std::string stem = fmt::format("frames/{}/frame_{:05d}", tag, i);
    out.write(stem + ".pgm", frame_pgm(log.frames[i].image));
    out.write(stem + ".f32", frame_raw(log.frames[i].image));
  }
}

}  // namespace

std::vector<std::string> run_and_write(const std::string& verb, const ExperimentConfig& config,
                                       const std::filesystem::path& out_dir) {
  const bool e1 = verb == "e1" || verb == "all";
  const bool e2 = verb == "e2" || verb == "all";
  const bool e3 = verb == "e3" || verb == "all";
  if (!e1 && !e2 && !e3) throw Error("unknown experiment '" + verb + "'");
  config.validate();

  OutputWriter out(out_dir);
  const std::string effective = dump_config(config);
  out.write("config_effective.yaml", effective);

  if (e1) {
    const E1Result r = run_e1_parameter_recovery(config);
    out.write("e1_trials.csv", e1_trials_csv(r));
    out.write("e1_table.csv", e1_table_csv(r));
    out.write("e1_table.txt", e1_table_text(r));
  }
  if (e2) {
    DwellObserver obs;
    if (config.dump_frames) obs = [&](const std::string& tag, const ScanLog& log) { dump_frames(out, tag, log); };
    const E2Result r = run_e2_stabilisation(config, obs);
    out.write("e2_ncc.csv", e2_ncc_csv(r));
    out.write("e2_summary.csv", e2_summary_csv(r));
  }
  if (e3) {
    std::vector<std::string> written_trajectories;
    const ScanObserver obs = [&](const E3Artifacts& a) {
      const std::string dir = "e3/" + a.tag + "/";
      out.write(dir + "trajectory.csv", trajectory_csv(*a.trajectory));
      out.write(dir + "scan_log.csv", scan_log_csv(*a.log));
      out.write(dir + "scan_log.json", scan_log_json(*a.log));
      if (a.reconstruction) {
        out.write(dir + "mesh.stl", mesh_stl(a.reconstruction->mesh, a.tag));
        out.write(dir + "mesh.obj", mesh_obj(a.reconstruction->mesh));
        out.write(dir + "score.json", score_json(*a.score, a.truth));
      }
      if (config.dump_frames) dump_frames(out, a.tag, *a.log);
    };
    const E3Result r = run_e3_tumour_scan(config, obs);
    out.write("e3_table.csv", e3_table_csv(r));
    out.write("e3_table.txt", e3_table_text(r));
  }

  nlohmann::ordered_json manifest;
  manifest["software"] = "mcscan";
  manifest["version"] = kVersion;
  manifest["experiment"] = verb;
  manifest["seed"] = config.seed;
  manifest["compensation"] = config.compensation;
  manifest["config_sha256"] = sha256_hex(effective);
  manifest["files"] = nlohmann::ordered_json::array();
  std::vector<std::string> paths;
  for (const auto& [path, hash] : out.files()) {
    manifest["files"].push_back({{"path", path}, {"sha256", hash}});
    paths.push_back(path);
  }
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  paths.push_back("manifest.json");
  return paths;
}

}  // namespace mcscan
