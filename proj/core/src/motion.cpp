#include "mcscan/motion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace mcscan {

namespace {

constexpr double kPi = std::numbers::pi;

double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

double median_of(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double cost_of(const RespiratoryModel& m, const MotionTrace& trace) {
  double c = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double r = m.evaluate(trace.times[i]) - trace.values[i];
    c += r * r;
  }
  return 0.5 * c;
}

double sample_spacing(const MotionTrace& trace) {
  return (trace.times.back() - trace.times.front()) / static_cast<double>(trace.size() - 1);
}

double span_frames(const MotionTrace& trace) {
  return trace.times.back() - trace.times.front() + sample_spacing(trace);
}

/// Period estimate from the dominant autocorrelation peak, in frames.
double autocorrelation_period(const MotionTrace& trace) {
  const std::size_t n = trace.size();
  double mean = 0.0;
  for (double v : trace.values) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = trace.values[i] - mean;

  const std::size_t max_lag = std::max<std::size_t>(2, std::min(n - 2, (2 * n) / 3));
  std::vector<double> acf(max_lag + 1, 0.0);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += y[i] * y[i + k];
    acf[k] = s / static_cast<double>(n - k);
  }
  if (!(acf[0] > 0.0)) throw FitError("degenerate trace: zero variance", {});

  // Skip the central lobe, then take the earliest local maximum close to the
  // global one so that 2*tau harmonics are not preferred.
  // The mean-removed pulse train always swings negative between breaths;
  // noise ripples on the lobe itself must not count as peaks.
  std::size_t start = 1;
  while (start < max_lag && acf[start] >= 0.0) ++start;
  if (start >= max_lag) {
    start = 1;
    while (start + 1 <= max_lag && acf[start + 1] < acf[start]) ++start;
  }
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t k = start; k < max_lag; ++k) best = std::max(best, acf[k]);
  std::size_t peak = 0;
  for (std::size_t k = std::max<std::size_t>(start, 1); k < max_lag; ++k) {
    if (acf[k] >= acf[k - 1] && acf[k] >= acf[k + 1] && acf[k] >= 0.8 * best) {
      peak = k;
      break;
    }
  }
  if (peak == 0) throw FitError("insufficient data: no periodic autocorrelation peak", {});
  double offset = 0.0;
  const double denom = acf[peak - 1] - 2.0 * acf[peak] + acf[peak + 1];
  if (std::abs(denom) > 0.0) offset = std::clamp(0.5 * (acf[peak - 1] - acf[peak + 1]) / denom, -0.5, 0.5);
  return (static_cast<double>(peak) + offset) * sample_spacing(trace);
}

/// Least-squares (z0, b) for fixed (tau, phi, n); returns the cost.
double linear_amplitude_fit(const MotionTrace& trace, RespiratoryModel& m) {
  double s1 = 0.0, sg = 0.0, sgg = 0.0, sy = 0.0, sgy = 0.0;
  const double n = static_cast<double>(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double g = -ipow(std::cos(m.argument(trace.times[i])), 2 * m.n);
    const double y = trace.values[i];
    s1 += 1.0;
    sg += g;
    sgg += g * g;
    sy += y;
    sgy += g * y;
  }
  const double det = n * sgg - sg * sg;
  if (std::abs(det) < 1e-300) return std::numeric_limits<double>::infinity();
  m.z0 = (sgg * sy - sg * sgy) / det;
  m.b = (s1 * sgy - sg * sy) / det;
  return cost_of(m, trace);
}

}  // namespace

// --- RespiratoryModel -------------------------------------------------------

double RespiratoryModel::argument(double t) const { return kPi * t / tau - phi; }

double RespiratoryModel::evaluate(double t) const {
  return z0 - b * ipow(std::cos(argument(t)), 2 * n);
}

std::array<double, 4> RespiratoryModel::jacobian(double t) const {
  const double a = argument(t);
  const double c = std::cos(a);
  const double s = std::sin(a);
  const double c_odd = ipow(c, 2 * n - 1);
  // dz/da = 2 n b cos^(2n-1)(a) sin(a); da/dtau = -pi t / tau^2; da/dphi = -1
  const double dz_da = 2.0 * n * b * c_odd * s;
  return {1.0, -c_odd * c, dz_da * (-kPi * t / (tau * tau)), -dz_da};
}

double RespiratoryModel::slope(double t) const {
  const double a = argument(t);
  return 2.0 * n * b * ipow(std::cos(a), 2 * n - 1) * std::sin(a) * kPi / tau;
}

bool RespiratoryModel::is_valid() const {
  return std::isfinite(z0) && std::isfinite(b) && std::isfinite(tau) && std::isfinite(phi) && b >= 0.0 &&
         tau > 0.0 && n >= 1;
}

std::array<double, 4> model_jacobian(const RespiratoryModel& model, double t) { return model.jacobian(t); }

double normalize_phase(double phi) {
  double r = std::fmod(phi, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r -= kPi;
  return r;
}

double wrap_phase_difference(double dphi) {
  double r = std::fmod(dphi, kPi);
  if (r > kPi / 2.0) r -= kPi;
  if (r <= -kPi / 2.0) r += kPi;
  return r;
}

double max_model_slope(const RespiratoryModel& model) {
  constexpr int kSamples = 4096;
  double best = 0.0;
  for (int i = 0; i < kSamples; ++i) best = std::max(best, std::abs(model.slope(model.tau * i / kSamples)));
  return best;
}

// --- PCA ----------------------------------------------------------------------

MotionBasis MotionBasis::from_axis(const Vec3& axis) {
  const Vec3 a = axis.normalized();
  const Vec3 helper = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 second = (helper - helper.dot(a) * a).normalized();
  MotionBasis basis;
  basis.axes.row(0) = a.transpose();
  basis.axes.row(1) = second.transpose();
  basis.axes.row(2) = a.cross(second).transpose();
  return basis;
}

void MotionTrace::validate() const {
  if (times.size() != values.size()) throw Error("motion trace: times and values differ in length");
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (!(times[i] > times[i - 1])) throw Error("motion trace: times must be strictly increasing");
  }
}

Vec3 aggregate_displacement(const TrackedGrid& grid) {
  if (grid.points_ref.size() != grid.points_now.size() || grid.points_ref.size() != grid.consistent.size()) {
    throw Error("tracked grid: inconsistent list lengths");
  }
  std::array<std::vector<double>, 3> comps;
  for (std::size_t i = 0; i < grid.points_ref.size(); ++i) {
    if (!grid.consistent[i]) continue;
    const Vec3 d = grid.points_ref[i] - grid.points_now[i];
    for (int k = 0; k < 3; ++k) comps[static_cast<std::size_t>(k)].push_back(d(k));
  }
  if (comps[0].empty()) throw Error("no consistent tracks");
  return {median_of(comps[0]), median_of(comps[1]), median_of(comps[2])};
}

MotionBasis extract_principal_motion(std::span<const Vec3> samples) {
  if (samples.size() < 3) throw Error("extract_principal_motion: need at least 3 samples");
  Vec3 mean = Vec3::Zero();
  for (const Vec3& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& s : samples) cov += (s - mean) * (s - mean).transpose();
  cov /= static_cast<double>(samples.size());

  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("extract_principal_motion: eigen-decomposition failed");
  // Eigen returns ascending eigenvalues.
  const Vec3 values = solver.eigenvalues().reverse();
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if (!(values(0) > 1e-15 * scale) || values(0) <= 0.0) {
    throw Error("extract_principal_motion: degenerate samples (zero variance)");
  }

  MotionBasis basis;
  basis.mean = mean;
  for (int k = 0; k < 3; ++k) {
    // Rounding can leave the smallest eigenvalues slightly negative.
    basis.eigenvalues(k) = std::max(0.0, values(k));
  }
  for (int r = 0; r < 2; ++r) {
    Vec3 axis = solver.eigenvectors().col(2 - r);
    for (int k = 0; k < 3; ++k) {
      if (std::abs(axis(k)) > 1e-12) {
        if (axis(k) < 0.0) axis = -axis;
        break;
      }
    }
    basis.axes.row(r) = axis.transpose();
  }
  basis.axes.row(2) = Vec3(basis.axes.row(0)).cross(Vec3(basis.axes.row(1))).transpose();
  return basis;
}

Vec3 predict_displacement(const RespiratoryModel& model, const MotionBasis& basis, double t) {
  return basis.from_pca(Vec3(model.evaluate(t), 0.0, 0.0));
}

// --- Fitting -----------------------------------------------------------------

RespiratoryModel initial_guess(const MotionTrace& trace, int n, const FitOptions& options) {
  trace.validate();
  if (trace.size() < 8) throw FitError("insufficient data: need at least 8 samples", {});
  const auto [lo, hi] = std::minmax_element(trace.values.begin(), trace.values.end());
  if (!(*hi - *lo > options.min_amplitude)) {
    RespiratoryModel flat{*hi, *hi - *lo, 1.0, 0.0, n};
    throw FitError("degenerate trace: amplitude below threshold", flat);
  }

  RespiratoryModel guess{*hi, *hi - *lo, autocorrelation_period(trace), 0.0, n};
  const double tau_ac = guess.tau;
  double best_cost = std::numeric_limits<double>::infinity();
  RespiratoryModel best = guess;
  constexpr int kTauSteps = 6;
  for (int j = -kTauSteps; j <= kTauSteps; ++j) {
    for (int k = 0; k < options.phase_grid; ++k) {
      RespiratoryModel m = guess;
      m.tau = tau_ac * (1.0 + 0.005 * j);
      m.phi = kPi * k / options.phase_grid;
      const double c = linear_amplitude_fit(trace, m);
      if (m.b > 0.0 && c < best_cost) {
        best_cost = c;
        best = m;
      }
    }
  }
  if (!std::isfinite(best_cost)) throw FitError("initial guess failed: no positive-amplitude candidate", guess);
  return best;
}

FitReport fit_model(const MotionTrace& trace, int n, const std::optional<RespiratoryModel>& init,
                    const FitOptions& options) {
  trace.validate();
  if (n < 1) throw Error("fit_model: n must be >= 1");
  if (trace.size() < 8) throw FitError("insufficient data: need at least 8 samples", init.value_or(RespiratoryModel{}));

  RespiratoryModel model = init ? *init : initial_guess(trace, n, options);
  model.n = n;
  if (!(model.tau > 0.0)) throw FitError("fit_model: initial period must be positive", model);
  if (span_frames(trace) < 2.0 * model.tau * (1.0 - 1e-9)) {
    throw FitError("insufficient data: trace shorter than two periods", model);
  }

  using Vec4 = Eigen::Matrix<double, 4, 1>;
  using Mat44 = Eigen::Matrix<double, 4, 4>;
  auto to_vec = [](const RespiratoryModel& m) { return Vec4(m.z0, m.b, m.tau, m.phi); };
  auto from_vec = [n](const Vec4& p) { return RespiratoryModel{p(0), p(1), p(2), p(3), n}; };

  double lambda = options.initial_lambda;
  double cost = cost_of(model, trace);
  const double tiny_cost = 1e-28 * static_cast<double>(trace.size());
  bool converged = cost <= tiny_cost;
  int iterations = 0;

  while (!converged && iterations < options.max_iterations) {
    ++iterations;
    Mat44 jtj = Mat44::Zero();
    Vec4 jtr = Vec4::Zero();
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const auto jac = model.jacobian(trace.times[i]);
      const Vec4 j(jac[0], jac[1], jac[2], jac[3]);
      const double r = model.evaluate(trace.times[i]) - trace.values[i];
      jtj.noalias() += j * j.transpose();
      jtr.noalias() += j * r;
    }
    Mat44 damped = jtj;
    for (int k = 0; k < 4; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-12);
    const Vec4 step = damped.ldlt().solve(-jtr);
    const RespiratoryModel candidate = from_vec(to_vec(model) + step);
    const double candidate_cost =
        (step.allFinite() && candidate.tau > 0.0) ? cost_of(candidate, trace) : std::numeric_limits<double>::infinity();

    if (candidate_cost < cost) {
      const double rel = (cost - candidate_cost) / std::max(cost, std::numeric_limits<double>::min());
      model = candidate;
      cost = candidate_cost;
      lambda = std::max(lambda / 10.0, 1e-12);
      if (rel < options.relative_cost_tolerance || cost <= tiny_cost) converged = true;
    } else {
      lambda *= 10.0;
      // No descent direction left at any damping: stationary point.
      if (lambda > 1e16) converged = true;
    }
  }

  if (!converged) throw FitError("fit_model: no convergence within iteration limit", model);
  if (!(model.b > options.min_amplitude)) throw FitError("fit_model: degenerate fit (amplitude below threshold)", model);
  model.phi = normalize_phase(model.phi);
  FitReport report;
  report.model = model;
  report.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(trace.size()));
  report.iterations = iterations;
  report.converged = true;
  return report;
}

// --- Online phase update -----------------------------------------------------

PhaseUpdate update_phase(const RespiratoryModel& model, const MotionTrace& window,
                         const PhaseUpdateOptions& options) {
  window.validate();
  if (window.size() < 2 || span_frames(window) < 2.0 * model.tau * (1.0 - 1e-9)) {
    throw Error("update_phase: window shorter than two periods");
  }

  RespiratoryModel m = model;
  auto cost_at = [&](double phi) {
    m.phi = phi;
    return cost_of(m, window);
  };

  const double prior = model.phi;
  double best_phi = prior;
  double best_cost = cost_at(prior);
  for (int k = 0; k < options.grid; ++k) {
    const double phi = prior - kPi / 2.0 + kPi * k / options.grid;
    const double c = cost_at(phi);
    if (c < best_cost) {
      best_cost = c;
      best_phi = phi;
    }
  }

  // 1D Levenberg-Marquardt refinement.
  double lambda = 1e-3;
  double phi = best_phi;
  double cost = best_cost;
  for (int it = 0; it < options.max_iterations; ++it) {
    m.phi = phi;
    double jj = 0.0, jr = 0.0;
    for (std::size_t i = 0; i < window.size(); ++i) {
      const double j = m.jacobian(window.times[i])[3];
      jj += j * j;
      jr += j * (m.evaluate(window.times[i]) - window.values[i]);
    }
    if (!(jj > 0.0)) break;
    const double step = -jr / (jj * (1.0 + lambda));
    const double c = cost_at(phi + step);
    if (c < cost) {
      const double rel = (cost - c) / std::max(cost, std::numeric_limits<double>::min());
      phi += step;
      cost = c;
      lambda /= 10.0;
      if (rel < 1e-12 || std::abs(step) < 1e-14) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }

  PhaseUpdate update;
  update.fitted_offset = wrap_phase_difference(phi - prior);
  update.applied_offset = std::clamp(update.fitted_offset, -options.max_step, options.max_step);
  update.phi = normalize_phase(prior + update.applied_offset);
  return update;
}

void OnlinePhaseUpdater::push(double t, double value) {
  if (!samples_.empty() && !(t > samples_.back().first)) throw Error("phase updater: times must increase");
  samples_.emplace_back(t, value);
}

std::optional<PhaseUpdate> OnlinePhaseUpdater::update(RespiratoryModel& model) {
  if (samples_.size() < 2) return std::nullopt;
  const double window_frames = std::ceil(2.0 * model.tau);
  const double newest = samples_.back().first;
  // Keep a little history beyond the window in case tau grows.
  while (samples_.size() > 2 && samples_.front().first < newest - 3.0 * window_frames) samples_.pop_front();

  MotionTrace window;
  for (const auto& [t, v] : samples_) {
    if (t > newest - window_frames) {
      window.times.push_back(t);
      window.values.push_back(v);
    }
  }
  if (window.size() < 2) return std::nullopt;
  const double spacing = (window.times.back() - window.times.front()) / static_cast<double>(window.size() - 1);
  if (window.times.back() - window.times.front() + spacing < 2.0 * model.tau * (1.0 - 1e-9)) return std::nullopt;

  const PhaseUpdate result = update_phase(model, window, options_);
  model.phi = result.phi;
  return result;
}

// --- Learning ----------------------------------------------------------------

LearnedMotion learn_motion(std::span<const double> times, std::span<const Vec3> positions, int n,
                           const FitOptions& options) {
  if (times.size() != positions.size()) throw Error("learn_motion: times and positions differ in length");
  LearnedMotion learned;
  learned.basis = extract_principal_motion(positions);

  MotionTrace trace;
  trace.times.assign(times.begin(), times.end());
  trace.values.reserve(positions.size());
  for (const Vec3& p : positions) trace.values.push_back(learned.basis.primary(p));

  // The model dwells near its maximum (exhale); if the trace dwells near its
  // minimum instead the axis points the wrong way.
  std::vector<double> sorted = trace.values;
  const double med = median_of(sorted);
  const auto [lo, hi] = std::minmax_element(trace.values.begin(), trace.values.end());
  if (*hi - med > med - *lo) {
    learned.basis.axes.row(0) *= -1.0;
    learned.basis.axes.row(2) *= -1.0;
    for (double& v : trace.values) v = -v;
  }
  learned.fit = fit_model(trace, n, std::nullopt, options);
  return learned;
}

LearnedMotion exact_motion(const MotionGroundTruth& gt, double reference_time) {
  LearnedMotion learned;
  learned.basis = MotionBasis::from_axis(gt.axis);
  learned.fit.model = gt.model;
  learned.fit.model.z0 = gt.model.z0 - gt.model.evaluate(reference_time);
  learned.fit.converged = true;
  return learned;
}

}  // namespace mcscan
