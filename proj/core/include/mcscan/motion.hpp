#pragma once

#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcscan/geometry.hpp"
#include "mcscan/respiratory_model.hpp"
#include "mcscan/tissue.hpp"

namespace mcscan {

/// PCA frame of the observed motion. Rows of `axes` are principal directions,
/// so `axes * x` maps camera-space vectors into PCA space.
struct MotionBasis {
  Mat3 axes = Mat3::Identity();
  Vec3 eigenvalues = Vec3::Zero();  // mm^2, descending
  Vec3 mean = Vec3::Zero();

  Vec3 to_pca(const Vec3& x) const { return axes * x; }
  Vec3 from_pca(const Vec3& y) const { return axes.transpose() * y; }
  double primary(const Vec3& x) const { return axes.row(0).dot(x); }

  /// Basis whose first axis is `axis` (normalised); the others complete a
  /// right-handed orthonormal frame.
  static MotionBasis from_axis(const Vec3& axis);
};

/// Scalar motion series sampled at strictly increasing frame times.
struct MotionTrace {
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const { return times.size(); }
  /// Throws Error if sizes differ or times are not strictly increasing.
  void validate() const;
};

/// Componentwise median of points_ref - points_now over consistent tracks.
/// Throws Error("no consistent tracks") when every track was rejected.
Vec3 aggregate_displacement(const TrackedGrid& grid);

/// PCA of 3D samples. The first axis carries the largest variance; each of
/// the first two axes has its first non-zero component positive and the third
/// completes a right-handed frame.
MotionBasis extract_principal_motion(std::span<const Vec3> samples);

/// Back-projects the model value through the basis: axes^T [z(t), 0, 0]^T.
Vec3 predict_displacement(const RespiratoryModel& model, const MotionBasis& basis, double t);

struct FitOptions {
  int max_iterations = 200;
  double relative_cost_tolerance = 1e-10;
  double initial_lambda = 1e-3;
  int phase_grid = 64;
  /// Fits whose amplitude falls below this are reported as degenerate.
  double min_amplitude = 1e-6;
};

struct FitReport {
  RespiratoryModel model;
  double residual_rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Raised when a fit fails; carries the last iterate.
class FitError : public Error {
 public:
  FitError(const std::string& what, const RespiratoryModel& last) : Error(what), last_iterate(last) {}
  RespiratoryModel last_iterate;
};

/// Data-driven starting point: z0 = max, b = max - min, tau from the
/// autocorrelation peak, then a (tau, phi) grid with (z0, b) solved linearly.
RespiratoryModel initial_guess(const MotionTrace& trace, int n, const FitOptions& options = {});

/// Levenberg-Marquardt fit of (z0, b, tau, phi) with n held fixed.
/// Throws FitError on insufficient data, degenerate amplitude or
/// non-convergence.
FitReport fit_model(const MotionTrace& trace, int n, const std::optional<RespiratoryModel>& init = std::nullopt,
                    const FitOptions& options = {});

struct PhaseUpdateOptions {
  /// Largest phase change applied by one update (rad).
  double max_step = 0.05;
  int grid = 64;
  int max_iterations = 50;
};

struct PhaseUpdate {
  double phi = 0.0;             // updated phase, normalised
  double fitted_offset = 0.0;   // least-squares optimum minus prior phase
  double applied_offset = 0.0;  // after the per-update cap
};

/// Re-fits phi alone over `window` (must span at least two model periods).
PhaseUpdate update_phase(const RespiratoryModel& model, const MotionTrace& window,
                         const PhaseUpdateOptions& options = {});

/// Rolling two-cycle buffer feeding update_phase. Single writer.
class OnlinePhaseUpdater {
 public:
  explicit OnlinePhaseUpdater(PhaseUpdateOptions options = {}) : options_(options) {}

  void push(double t, double value);
  /// Updates model.phi in place when the buffer spans 2 * model.tau frames.
  std::optional<PhaseUpdate> update(RespiratoryModel& model);
  std::size_t buffered() const { return samples_.size(); }

 private:
  PhaseUpdateOptions options_;
  std::deque<std::pair<double, double>> samples_;
};

/// Snapshot exchange between the phase updater and the control loop; readers
/// always receive a complete copy.
class ModelStore {
 public:
  explicit ModelStore(const RespiratoryModel& model) : model_(model) {}
  RespiratoryModel snapshot() const {
    std::lock_guard lock(mutex_);
    return model_;
  }
  void publish(const RespiratoryModel& model) {
    std::lock_guard lock(mutex_);
    model_ = model;
  }

 private:
  mutable std::mutex mutex_;
  RespiratoryModel model_;
};

/// Result of learning from tracked tissue positions.
struct LearnedMotion {
  MotionBasis basis;
  FitReport fit;
};

/// PCA + fit on tissue positions relative to the reference frame
/// (x_t = P_t - P_0). The first axis is oriented so that the projected trace
/// has its plateau at the top, which makes the fitted amplitude positive.
LearnedMotion learn_motion(std::span<const double> times, std::span<const Vec3> positions, int n,
                           const FitOptions& options = {});

/// Motion model and basis matching the ground truth exactly, expressed
/// relative to the position at t = reference_time.
LearnedMotion exact_motion(const MotionGroundTruth& gt, double reference_time = 0.0);

}  // namespace mcscan
