#include "mcscan/ultrasound.hpp"

#include <algorithm>
#include <cmath>

#include "mcscan/random.hpp"

namespace mcscan {

namespace {

double lattice_value(std::uint64_t seed, std::int64_t i, std::int64_t j, std::int64_t k) {
  return hash_to_normal(hash_mix(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j),
                                 static_cast<std::uint64_t>(k)));
}

/// Trilinearly interpolated lattice noise in tissue coordinates.
double speckle_texture(const SpeckleModel& model, const Vec3& p) {
  const Vec3 q = p / model.correlation_length;
  const double fx = std::floor(q.x()), fy = std::floor(q.y()), fz = std::floor(q.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy), iz = static_cast<std::int64_t>(fz);
  const double ax = q.x() - fx, ay = q.y() - fy, az = q.z() - fz;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? ax : 1.0 - ax) * (dy ? ay : 1.0 - ay) * (dz ? az : 1.0 - az);
        acc += w * lattice_value(model.seed, ix + dx, iy + dy, iz + dz);
      }
    }
  }
  return acc;
}

}  // namespace

void ImageSpec::validate() const {
  if (rows < 1 || cols < 1) throw Error("image spec: rows and cols must be positive");
  if (!(spacing > 0.0)) throw Error("image spec: spacing must be positive");
  if (supersample < 1) throw Error("image spec: supersample must be >= 1");
}

UltrasoundFrame acquire(const TissuePhantom& phantom, const RigidTransform& tissue_pose,
                        const RigidTransform& transducer_pose, const ImageSpec& spec, const SpeckleModel& speckle,
                        std::uint64_t frame_seed, double timestamp) {
  spec.validate();
  UltrasoundFrame frame;
  frame.rows = spec.rows;
  frame.cols = spec.cols;
  frame.spacing = spec.spacing;
  frame.capture_pose = transducer_pose;
  frame.timestamp = timestamp;
  frame.intensities.assign(static_cast<std::size_t>(spec.rows) * spec.cols, 0.0);

  // Image frame expressed in tissue coordinates.
  const RigidTransform tissue_from_image =
      tissue_pose.inverse() * transducer_pose * image_to_transducer(spec.cols, spec.spacing);
  const Mat3& r = tissue_from_image.rotation();
  const Vec3& t = tissue_from_image.translation();
  const int ss = spec.supersample;
  const double inv_samples = 1.0 / (ss * ss);

  // A probe in contact samples its first row exactly on the surface; the
  // tolerance keeps that row from flickering between air and tissue.
  constexpr double kContactTolerance = 1e-6;  // mm
  auto sample = [&](const Vec3& p) {
    double h = 0.0;
    if (!phantom.surface.try_height(p.head<2>(), h) || p.z() > h + kContactTolerance) return 0.0;
    return phantom.tumour.contains(p) ? phantom.intensity_inside : phantom.intensity_outside;
  };

  Rng electronic(frame_seed);
  for (int row = 0; row < spec.rows; ++row) {
    for (int col = 0; col < spec.cols; ++col) {
      double value = 0.0;
      for (int si = 0; si < ss; ++si) {
        for (int sj = 0; sj < ss; ++sj) {
          const double u = (col - 0.5 + (sj + 0.5) / ss) * spec.spacing;
          const double v = (row - 0.5 + (si + 0.5) / ss) * spec.spacing;
          value += sample(r.col(0) * u + r.col(1) * v + t);
        }
      }
      value *= inv_samples;
      if (speckle.enabled) {
        const Vec3 centre = r.col(0) * (col * spec.spacing) + r.col(1) * (row * spec.spacing) + t;
        value *= 1.0 + speckle.sigma * speckle_texture(speckle, centre);
        value += electronic.normal(speckle.electronic_sigma);
      }
      frame.at(row, col) = std::clamp(value, 0.0, 1.0);
    }
  }
  return frame;
}

double ncc(const UltrasoundFrame& a, const UltrasoundFrame& b) {
  if (a.rows != b.rows || a.cols != b.cols || a.intensities.size() != b.intensities.size()) {
    throw Error("ncc: frame dimensions differ");
  }
  const std::size_t n = a.intensities.size();
  if (n == 0) throw Error("ncc: empty frames");
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += a.intensities[i];
    mean_b += b.intensities[i];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.intensities[i] - mean_a;
    const double db = b.intensities[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  constexpr double kFlat = 1e-20;
  const bool flat_a = saa <= kFlat * static_cast<double>(n);
  const bool flat_b = sbb <= kFlat * static_cast<double>(n);
  if (flat_a && flat_b) return a.intensities == b.intensities ? 1.0 : 0.0;
  if (flat_a || flat_b) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), 0.0, 1.0);
}

}  // namespace mcscan
