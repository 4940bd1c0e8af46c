#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "mcscan/config.hpp"
#include "mcscan/planner.hpp"
#include "mcscan/geometry.hpp"
#include "mcscan/respiratory_model.hpp"

namespace mcscan::test {

inline Vec3 random_unit(std::mt19937_64& g) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(g), n(g), n(g));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

inline RigidTransform random_transform(std::mt19937_64& g, double max_translation = 100.0) {
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> tr(-max_translation, max_translation);
  return {Eigen::AngleAxisd(angle(g), random_unit(g)).toRotationMatrix(), Vec3(tr(g), tr(g), tr(g))};
}

/// Plain homogeneous-matrix product used as an independent oracle.
inline Mat4 H(const RigidTransform& t) {
  Mat4 m = Mat4::Identity();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = t.rotation()(r, c);
    m(r, 3) = t.translation()(r);
  }
  return m;
}

inline double max_abs(const Mat4& a, const Mat4& b) { return (a - b).cwiseAbs().maxCoeff(); }

inline RespiratoryModel random_model(std::mt19937_64& g) {
  std::uniform_real_distribution<double> z0(-20.0, 20.0), b(1.0, 10.0), tau(50.0, 200.0), phi(0.0, M_PI);
  return {z0(g), b(g), tau(g), phi(g), 3};
}

// Fraction of raster points (0.1 mm pitch) inside the polygon that some sweep
// line's footprint strip covers. A strip spans +-width/2 across its line and
// the line's own extent along it.
inline double coverage(const ScanRegion& region, const ZigzagPath& path, double width) {
  struct Line { double v, u0, u1; };
  std::vector<Line> lines(static_cast<std::size_t>(path.line_count), {0.0, 1e300, -1e300});
  const bool along_x = path.sweep_axis.x() > 0.5;
  for (std::size_t i = 0; i < path.points.size(); ++i) {
    if (path.line[i] < 0) continue;
    const Vec2& p = path.points[i];
    const double u = along_x ? p.x() : p.y();
    Line& l = lines[static_cast<std::size_t>(path.line[i])];
    l.v = along_x ? p.y() : p.x();
    l.u0 = std::min(l.u0, u);
    l.u1 = std::max(l.u1, u);
  }
  auto inside = [&](const Vec2& q) {
    const auto& P = region.polygon;
    int sign = 0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      const Vec2 e = P[(i + 1) % P.size()] - P[i];
      const Vec2 d = q - P[i];
      const double c = e.x() * d.y() - e.y() * d.x();
      if (std::abs(c) < 1e-12) continue;
      const int s = c > 0 ? 1 : -1;
      if (sign == 0) sign = s;
      if (s != sign) return false;
    }
    return true;
  };
  Vec2 lo = region.polygon[0], hi = lo;
  for (const Vec2& p : region.polygon) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int total = 0, covered = 0;
  for (double x = lo.x(); x <= hi.x() + 1e-9; x += 0.1) {
    for (double y = lo.y(); y <= hi.y() + 1e-9; y += 0.1) {
      const Vec2 q(x, y);
      if (!inside(q)) continue;
      ++total;
      const double u = along_x ? x : y, v = along_x ? y : x;
      for (const Line& l : lines) {
        if (std::abs(v - l.v) <= 0.5 * width + 1e-9 && u >= l.u0 - 1e-9 && u <= l.u1 + 1e-9) {
          ++covered;
          break;
        }
      }
    }
  }
  return static_cast<double>(covered) / total;
}

}  // namespace mcscan::test
