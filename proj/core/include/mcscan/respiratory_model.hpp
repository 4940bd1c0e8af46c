#pragma once

#include <array>

namespace mcscan {

/// Asymmetric-period breathing model z(t) = z0 - b cos^(2n)(pi t / tau - phi).
///
/// z0 is the exhale position (mm), b the amplitude (mm), tau the period in
/// frames, phi the phase (rad) and n the asymmetry degree; larger n gives a
/// longer exhale plateau. b == 0 describes static tissue.
struct RespiratoryModel {
  double z0 = 0.0;
  double b = 0.0;
  double tau = 1.0;
  double phi = 0.0;
  int n = 3;

  double evaluate(double t) const;
  /// Partials (dz/dz0, dz/db, dz/dtau, dz/dphi) at time t.
  std::array<double, 4> jacobian(double t) const;
  /// dz/dt.
  double slope(double t) const;
  /// Argument of the cosine, pi t / tau - phi.
  double argument(double t) const;
  bool is_valid() const;
};

std::array<double, 4> model_jacobian(const RespiratoryModel& model, double t);

/// Wraps a phase into [0, pi); cos^(2n) has period pi in its argument.
double normalize_phase(double phi);

/// Wraps a phase difference into (-pi/2, pi/2].
double wrap_phase_difference(double dphi);

/// Largest |dz/dt| over one period (frames^-1 * mm), found by dense sampling.
double max_model_slope(const RespiratoryModel& model);

}  // namespace mcscan
