#include "mcscan/tissue.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mcscan/random.hpp"

namespace mcscan {

Heightfield::Heightfield(double x_min, double y_min, double spacing, int nx, int ny, std::vector<double> heights)
    : x_min_(x_min), y_min_(y_min), spacing_(spacing), nx_(nx), ny_(ny), heights_(std::move(heights)) {
  if (!(spacing > 0.0) || nx < 2 || ny < 2) throw Error("heightfield: need spacing > 0 and at least 2x2 samples");
  if (heights_.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)) {
    throw Error("heightfield: height count does not match grid size");
  }
  for (double h : heights_) {
    if (!std::isfinite(h)) throw Error("heightfield: non-finite height");
  }
}

Heightfield Heightfield::from_function(double x_min, double x_max, double y_min, double y_max, double spacing,
                                       const std::function<double(double, double)>& height) {
  if (!(x_max > x_min) || !(y_max > y_min) || !(spacing > 0.0)) throw Error("heightfield: invalid extent");
  const int nx = static_cast<int>(std::floor((x_max - x_min) / spacing + 1e-9)) + 1;
  const int ny = static_cast<int>(std::floor((y_max - y_min) / spacing + 1e-9)) + 1;
  std::vector<double> h(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      h[static_cast<std::size_t>(iy) * nx + ix] = height(x_min + ix * spacing, y_min + iy * spacing);
    }
  }
  return {x_min, y_min, spacing, nx, ny, std::move(h)};
}

Heightfield Heightfield::flat(double x_min, double x_max, double y_min, double y_max, double spacing,
                              double height) {
  return from_function(x_min, x_max, y_min, y_max, spacing, [height](double, double) { return height; });
}

bool Heightfield::contains(const Vec2& xy, double tol) const {
  return xy.x() >= x_min() - tol && xy.x() <= x_max() + tol && xy.y() >= y_min() - tol && xy.y() <= y_max() + tol;
}

bool Heightfield::try_height(const Vec2& xy, double& out) const {
  if (nx_ < 2 || !contains(xy)) return false;
  const double fx = std::clamp((xy.x() - x_min_) / spacing_, 0.0, static_cast<double>(nx_ - 1));
  const double fy = std::clamp((xy.y() - y_min_) / spacing_, 0.0, static_cast<double>(ny_ - 1));
  const int ix = std::min(static_cast<int>(fx), nx_ - 2);
  const int iy = std::min(static_cast<int>(fy), ny_ - 2);
  const double ax = fx - ix;
  const double ay = fy - iy;
  const double h0 = grid(ix, iy) * (1.0 - ax) + grid(ix + 1, iy) * ax;
  const double h1 = grid(ix, iy + 1) * (1.0 - ax) + grid(ix + 1, iy + 1) * ax;
  out = h0 * (1.0 - ay) + h1 * ay;
  return true;
}

double Heightfield::height(const Vec2& xy) const {
  double h = 0.0;
  if (!try_height(xy, h)) throw Error("heightfield: point outside surface extent");
  return h;
}

bool Ellipsoid::contains(const Vec3& p) const {
  const Vec3 local = orientation.transpose() * (p - center);
  const Vec3 q = local.cwiseQuotient(semi_axes);
  return q.squaredNorm() <= 1.0;
}

double Ellipsoid::width_along(const Vec3& d) const {
  const Vec3 local = orientation.transpose() * d.normalized();
  return 2.0 * std::sqrt(local.cwiseProduct(semi_axes).squaredNorm());
}

double Ellipsoid::volume() const { return 4.0 / 3.0 * std::numbers::pi * semi_axes.prod(); }

Ellipsoid Ellipsoid::transformed(const RigidTransform& t) const {
  return {t.apply(center), semi_axes, t.rotation() * orientation};
}

void TissuePhantom::validate() const {
  if (!(tumour.semi_axes.minCoeff() > 0.0)) throw Error("phantom: tumour semi-axes must be positive");
  if (intensity_inside < 0.0 || intensity_inside > 1.0 || intensity_outside < 0.0 || intensity_outside > 1.0) {
    throw Error("phantom: intensities must lie in [0, 1]");
  }
  // Sample the upper half of the ellipsoid and compare with the surface.
  constexpr int kSteps = 48;
  for (int i = 0; i <= kSteps; ++i) {
    const double theta = std::numbers::pi / 2.0 * i / kSteps;  // polar angle from +z
    for (int j = 0; j < 2 * kSteps; ++j) {
      const double az = std::numbers::pi * j / kSteps;
      const Vec3 unit(std::sin(theta) * std::cos(az), std::sin(theta) * std::sin(az), std::cos(theta));
      const Vec3 p = tumour.center + tumour.orientation * unit.cwiseProduct(tumour.semi_axes);
      double h = 0.0;
      if (!surface.try_height(p.head<2>(), h)) throw Error("phantom: tumour extends beyond the surface extent");
      if (!(p.z() < h)) throw Error("phantom: tumour must lie strictly below the surface");
    }
  }
}

double MotionGroundTruth::next_exhale(double t) const {
  // cos(pi t / tau - phi) = 0  <=>  t = tau (phi + pi/2 + k pi) / pi
  const double first = model.tau * (model.phi + std::numbers::pi / 2.0) / std::numbers::pi;
  const double k = std::ceil((t - first) / model.tau - 1e-12);
  return first + k * model.tau;
}

RigidTransform tissue_pose_at(const MotionGroundTruth& gt, double t) {
  return RigidTransform::translation(gt.displacement(t) * gt.axis);
}

SurfaceSample surface_point_and_normal(const Heightfield& surface, const Vec2& xy) {
  if (!surface.contains(xy)) throw Error("surface_point_and_normal: point outside surface extent");
  const double h = surface.spacing();
  auto central = [&](const Vec2& dir) {
    Vec2 lo = xy - h * dir;
    Vec2 hi = xy + h * dir;
    // Fall back to one-sided differences at the border.
    if (!surface.contains(lo)) lo = xy;
    if (!surface.contains(hi)) hi = xy;
    return (surface.height(hi) - surface.height(lo)) / (hi - lo).dot(dir);
  };
  const double dhdx = central(Vec2::UnitX());
  const double dhdy = central(Vec2::UnitY());
  return {Vec3(xy.x(), xy.y(), surface.height(xy)), Vec3(-dhdx, -dhdy, 1.0).normalized()};
}

TrackedGrid observe_grid(const TissuePhantom& phantom, const MotionGroundTruth& gt, const TrackingRegion& region,
                         double t, const TrackerNoise& noise, std::uint64_t seed) {
  if (region.nx < 1 || region.ny < 1 || region.x_max < region.x_min || region.y_max < region.y_min) {
    throw Error("empty tracking region");
  }
  if (!phantom.surface.contains({region.x_min, region.y_min}) ||
      !phantom.surface.contains({region.x_max, region.y_max})) {
    throw Error("observe_grid: tracking region outside surface extent");
  }
  if (noise.outlier_rate < 0.0 || noise.outlier_rate >= 0.5) throw Error("observe_grid: outlier_rate must be in [0, 0.5)");

  const Vec3 shift = gt.displacement(t) * gt.axis;
  Rng rng(seed);
  TrackedGrid grid;
  const std::size_t count = static_cast<std::size_t>(region.nx) * region.ny;
  grid.points_ref.reserve(count);
  grid.points_now.reserve(count);
  grid.consistent.reserve(count);
  grid.outlier.reserve(count);

  for (int iy = 0; iy < region.ny; ++iy) {
    const double y = region.ny == 1 ? 0.5 * (region.y_min + region.y_max)
                                    : region.y_min + (region.y_max - region.y_min) * iy / (region.ny - 1);
    for (int ix = 0; ix < region.nx; ++ix) {
      const double x = region.nx == 1 ? 0.5 * (region.x_min + region.x_max)
                                      : region.x_min + (region.x_max - region.x_min) * ix / (region.nx - 1);
      const Vec3 ref(x, y, phantom.surface.height({x, y}));
      Vec3 now = ref + shift;
      bool is_outlier = false;
      bool flagged = false;
      if (rng.bernoulli(noise.outlier_rate)) {
        is_outlier = true;
        now += rng.unit_vector() * rng.uniform(5.0 * noise.sigma, 20.0 * noise.sigma);
        flagged = rng.bernoulli(noise.detection_probability);
      } else {
        now += Vec3(rng.normal(noise.sigma), rng.normal(noise.sigma), rng.normal(noise.sigma));
      }
      grid.points_ref.push_back(ref);
      grid.points_now.push_back(now);
      grid.consistent.push_back(!flagged);
      grid.outlier.push_back(is_outlier);
    }
  }
  return grid;
}

}  // namespace mcscan
