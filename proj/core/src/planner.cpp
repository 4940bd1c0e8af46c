#include "mcscan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mcscan {

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

/// Keeps the part of `poly` where coordinate v (index 1) satisfies sign*(v - bound) <= 0.
std::vector<Vec2> clip_half_plane(const std::vector<Vec2>& poly, double bound, double sign) {
  std::vector<Vec2> out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    const double da = sign * (a.y() - bound);
    const double db = sign * (b.y() - bound);
    if (da <= 0.0) out.push_back(a);
    if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0)) {
      const double s = da / (da - db);
      out.push_back(a + s * (b - a));
    }
  }
  return out;
}

}  // namespace

ScanRegion ScanRegion::rectangle(double x_min, double x_max, double y_min, double y_max, StartCorner start) {
  ScanRegion r;
  r.polygon = {{x_min, y_min}, {x_max, y_min}, {x_max, y_max}, {x_min, y_max}};
  r.start = start;
  return r;
}

double ScanRegion::area() const {
  double a = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) a += cross2(polygon[i], polygon[(i + 1) % polygon.size()]);
  return 0.5 * std::abs(a);
}

void ScanRegion::validate() const {
  if (polygon.size() < 3) throw Error("scan region: need at least 3 vertices");
  if (!(area() > 1e-9)) throw Error("scan region: degenerate area");
  int sign = 0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double c = cross2(polygon[(i + 1) % n] - polygon[i], polygon[(i + 2) % n] - polygon[(i + 1) % n]);
    if (std::abs(c) < 1e-12) continue;
    const int s = c > 0.0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) throw Error("scan region: polygon must be convex");
  }
}

ZigzagPath plan_zigzag(const ScanRegion& region, double transducer_width, double step) {
  if (!(transducer_width > 0.0)) throw Error("plan_zigzag: transducer width must be positive");
  if (!(step > 0.0)) throw Error("plan_zigzag: step must be positive");
  region.validate();

  Vec2 lo = region.polygon.front();
  Vec2 hi = lo;
  for (const Vec2& p : region.polygon) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const bool sweep_along_x = (hi.x() - lo.x()) >= (hi.y() - lo.y());

  // Work in (u, v): u along the sweep lines, v across them.
  auto to_uv = [&](const Vec2& p) { return sweep_along_x ? p : Vec2(p.y(), p.x()); };
  auto to_xy = [&](const Vec2& q) { return sweep_along_x ? q : Vec2(q.y(), q.x()); };
  std::vector<Vec2> poly;
  poly.reserve(region.polygon.size());
  for (const Vec2& p : region.polygon) poly.push_back(to_uv(p));
  const Vec2 lo_uv = to_uv(lo).cwiseMin(to_uv(hi));
  const Vec2 hi_uv = to_uv(lo).cwiseMax(to_uv(hi));

  Vec2 corner;
  switch (region.start) {
    case StartCorner::MinXMinY: corner = {lo.x(), lo.y()}; break;
    case StartCorner::MinXMaxY: corner = {lo.x(), hi.y()}; break;
    case StartCorner::MaxXMinY: corner = {hi.x(), lo.y()}; break;
    case StartCorner::MaxXMaxY: corner = {hi.x(), hi.y()}; break;
    case StartCorner::NearestOrigin: {
      const Vec2 candidates[] = {{lo.x(), lo.y()}, {lo.x(), hi.y()}, {hi.x(), lo.y()}, {hi.x(), hi.y()}};
      corner = candidates[0];
      for (const Vec2& c : candidates) {
        if (c.squaredNorm() < corner.squaredNorm() - 1e-12) corner = c;
      }
      break;
    }
  }
  const Vec2 corner_uv = to_uv(corner);
  const bool start_u_min = corner_uv.x() <= 0.5 * (lo_uv.x() + hi_uv.x());
  const bool start_v_min = corner_uv.y() <= 0.5 * (lo_uv.y() + hi_uv.y());

  const double spacing = 0.5 * transducer_width;
  const double v_span = hi_uv.y() - lo_uv.y();
  const int lines = static_cast<int>(std::floor(v_span / spacing + 1e-9)) + 1;

  ZigzagPath path;
  path.sweep_axis = sweep_along_x ? Vec2::UnitX() : Vec2::UnitY();
  path.line_spacing = spacing;
  path.line_count = lines;

  for (int k = 0; k < lines; ++k) {
    const double v = start_v_min ? lo_uv.y() + k * spacing : hi_uv.y() - k * spacing;
    // u-extent of the region inside this line's footprint band.
    std::vector<Vec2> band = clip_half_plane(poly, v + spacing, 1.0);
    band = clip_half_plane(band, v - spacing, -1.0);
    if (band.empty()) continue;
    double u_min = std::numeric_limits<double>::infinity();
    double u_max = -u_min;
    for (const Vec2& q : band) {
      u_min = std::min(u_min, q.x());
      u_max = std::max(u_max, q.x());
    }
    const bool forward = (k % 2 == 0) == start_u_min;
    const double u_from = forward ? u_min : u_max;
    const double u_to = forward ? u_max : u_min;
    const double dir = forward ? 1.0 : -1.0;
    const double length = u_max - u_min;

    std::vector<Vec2> line_pts;
    for (int i = 0;; ++i) {
      const double d = i * step;
      if (d >= length - 1e-9) break;
      line_pts.emplace_back(u_from + dir * d, v);
    }
    line_pts.emplace_back(u_to, v);

    if (!path.points.empty()) {
      const Vec2 a = to_uv(path.points.back());
      const Vec2 b = line_pts.front();
      const double gap = (b - a).norm();
      const int m = static_cast<int>(std::ceil(gap / step - 1e-9));
      for (int j = 1; j < m; ++j) {
        path.points.push_back(to_xy(a + (b - a) * (static_cast<double>(j) / m)));
        path.line.push_back(-1);
      }
    }
    for (const Vec2& q : line_pts) {
      path.points.push_back(to_xy(q));
      path.line.push_back(k);
    }
  }
  return path;
}

Mat3 transducer_orientation(const Vec3& normal, const Vec3& sweep) {
  const Vec3 n = normal.normalized();
  const Vec3 beam = -n;
  Vec3 tangent = sweep - sweep.dot(n) * n;
  if (tangent.norm() < 1e-12) throw Error("transducer_orientation: sweep direction parallel to the normal");
  tangent.normalize();

  // Tilt the image z axis onto the beam, then twist about it so that the
  // elevation axis (y) follows the sweep.
  const RigidTransform tilt = rotation_aligning(Vec3::UnitZ(), beam);
  const Vec3 y0 = tilt.rotate(Vec3::UnitY());
  const double twist = std::atan2(y0.cross(tangent).dot(beam), y0.dot(tangent));
  return Eigen::AngleAxisd(twist, beam).toRotationMatrix() * tilt.rotation();
}

ScanTrajectory lift_to_poses(const ZigzagPath& path, const Heightfield& surface, const FrameCalibration& calib,
                             const LiftOptions& options) {
  std::vector<std::size_t> outside;
  for (std::size_t i = 0; i < path.points.size(); ++i) {
    if (!surface.contains(path.points[i])) outside.push_back(i);
  }
  if (!outside.empty()) {
    std::ostringstream msg;
    msg << "lift_to_poses: path points outside surface extent at indices";
    for (std::size_t i : outside) msg << ' ' << i;
    throw Error(msg.str());
  }

  ScanTrajectory trajectory;
  trajectory.sweep_axis = Vec3(path.sweep_axis.x(), path.sweep_axis.y(), 0.0);
  const RigidTransform T_D_M = calib.T_M_D.inverse();
  trajectory.waypoints.reserve(path.points.size());
  for (std::size_t i = 0; i < path.points.size(); ++i) {
    const SurfaceSample s = surface_point_and_normal(surface, path.points[i]);
    Waypoint w;
    w.surface_point = s.point;
    w.normal = s.normal;
    w.desired_transducer =
        RigidTransform(transducer_orientation(s.normal, trajectory.sweep_axis), s.point + options.contact_offset * s.normal);
    w.desired_marker = w.desired_transducer * T_D_M;
    w.line = i < path.line.size() ? path.line[i] : -1;
    trajectory.waypoints.push_back(w);
  }
  return trajectory;
}

}  // namespace mcscan
