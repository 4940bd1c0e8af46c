#include "mcscan/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <unordered_map>

#include <Eigen/Eigenvalues>

namespace mcscan {

namespace {

std::vector<double> box_filter(const UltrasoundFrame& f, int radius) {
  if (radius <= 0) return f.intensities;
  std::vector<double> out(f.intensities.size());
  for (int r = 0; r < f.rows; ++r) {
    for (int c = 0; c < f.cols; ++c) {
      double s = 0.0;
      int count = 0;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || rr >= f.rows || cc < 0 || cc >= f.cols) continue;
          s += f.at(rr, cc);
          ++count;
        }
      }
      out[static_cast<std::size_t>(r) * f.cols + c] = s / count;
    }
  }
  return out;
}

double signed_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
  const double a = signed_area(poly);
  if (std::abs(a) < 1e-15) {
    Vec2 m = Vec2::Zero();
    for (const Vec2& p : poly) m += p;
    return m / static_cast<double>(poly.size());
  }
  Vec2 c = Vec2::Zero();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    const double w = p.x() * q.y() - q.x() * p.y();
    c += (p + q) * w;
  }
  return c / (6.0 * a);
}

/// Marching squares over a padded scalar field; returns every closed loop.
std::vector<std::vector<Vec2>> marching_squares(const std::vector<double>& field, int rows, int cols, double thr) {
  // field is (rows x cols) padded already; pixel (r, c) of the padded grid
  // sits at image coordinates (c - 1, r - 1).
  auto value = [&](int r, int c) { return field[static_cast<std::size_t>(r) * cols + c]; };
  auto h_edge = [&](int r, int c) { return 2LL * (static_cast<long long>(r) * cols + c); };
  auto v_edge = [&](int r, int c) { return 2LL * (static_cast<long long>(r) * cols + c) + 1; };

  std::unordered_map<long long, Vec2> points;
  std::unordered_map<long long, std::vector<long long>> adjacency;

  auto interp = [&](int r0, int c0, int r1, int c1) {
    const double a = value(r0, c0), b = value(r1, c1);
    const double s = (thr - a) / (b - a);
    return Vec2(c0 - 1 + s * (c1 - c0), r0 - 1 + s * (r1 - r0));
  };

  for (int r = 0; r + 1 < rows; ++r) {
    for (int c = 0; c + 1 < cols; ++c) {
      const double tl = value(r, c), tr = value(r, c + 1), br = value(r + 1, c + 1), bl = value(r + 1, c);
      const int index = (tl >= thr ? 8 : 0) | (tr >= thr ? 4 : 0) | (br >= thr ? 2 : 0) | (bl >= thr ? 1 : 0);
      if (index == 0 || index == 15) continue;

      const long long T = h_edge(r, c), B = h_edge(r + 1, c), L = v_edge(r, c), R = v_edge(r, c + 1);
      auto point_of = [&](long long e) {
        if (points.count(e)) return;
        if (e == T) points[e] = interp(r, c, r, c + 1);
        else if (e == B) points[e] = interp(r + 1, c, r + 1, c + 1);
        else if (e == L) points[e] = interp(r, c, r + 1, c);
        else points[e] = interp(r, c + 1, r + 1, c + 1);
      };
      auto link = [&](long long e0, long long e1) {
        point_of(e0);
        point_of(e1);
        adjacency[e0].push_back(e1);
        adjacency[e1].push_back(e0);
      };
      const bool centre_inside = 0.25 * (tl + tr + br + bl) >= thr;
      switch (index) {
        case 1: link(L, B); break;
        case 2: link(B, R); break;
        case 3: link(L, R); break;
        case 4: link(T, R); break;
        case 5:
          if (centre_inside) { link(T, L); link(R, B); } else { link(T, R); link(L, B); }
          break;
        case 6: link(T, B); break;
        case 7: link(T, L); break;
        case 8: link(T, L); break;
        case 9: link(T, B); break;
        case 10:
          if (centre_inside) { link(T, R); link(L, B); } else { link(T, L); link(R, B); }
          break;
        case 11: link(T, R); break;
        case 12: link(L, R); break;
        case 13: link(R, B); break;
        case 14: link(L, B); break;
        default: break;
      }
    }
  }

  std::vector<std::vector<Vec2>> loops;
  std::unordered_map<long long, bool> visited;
  // Deterministic traversal order.
  std::vector<long long> keys;
  keys.reserve(adjacency.size());
  for (const auto& kv : adjacency) keys.push_back(kv.first);
  std::sort(keys.begin(), keys.end());
  for (long long start : keys) {
    if (visited[start]) continue;
    std::vector<Vec2> loop;
    long long prev = -1, cur = start;
    while (!visited[cur]) {
      visited[cur] = true;
      loop.push_back(points[cur]);
      const auto& nb = adjacency[cur];
      long long next = -1;
      for (long long cand : nb) {
        if (cand != prev && !visited[cand]) {
          next = cand;
          break;
        }
      }
      if (next < 0) break;
      prev = cur;
      cur = next;
    }
    if (loop.size() >= 3) loops.push_back(std::move(loop));
  }
  return loops;
}

std::vector<Vec2> resample_by_angle(const std::vector<Vec2>& poly, const Vec2& centre, int count) {
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / count;
    const Vec2 d(std::cos(theta), std::sin(theta));
    double best = -1.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& p = poly[i];
      const Vec2 e = poly[(i + 1) % poly.size()] - p;
      // centre + s d = p + w e
      const double den = d.x() * (-e.y()) - d.y() * (-e.x());
      if (std::abs(den) < 1e-15) continue;
      const Vec2 rhs = p - centre;
      const double s = (rhs.x() * (-e.y()) - rhs.y() * (-e.x())) / den;
      const double w = (d.x() * rhs.y() - d.y() * rhs.x()) / den;
      if (s > 0.0 && w >= -1e-12 && w <= 1.0 + 1e-12) best = std::max(best, s);
    }
    if (best > 0.0) out.push_back(centre + best * d);
  }
  return out;
}

}  // namespace

double BoundaryContour::area() const { return std::abs(signed_area(points)); }

Vec2 BoundaryContour::centroid() const { return polygon_centroid(points); }

std::optional<Segmentation> segment_frame(const UltrasoundFrame& frame, const SegmentOptions& options) {
  if (frame.rows < 2 || frame.cols < 2) return std::nullopt;
  if (options.resample < 3) throw Error("segment_frame: resample count must be >= 3");
  const std::vector<double> smooth = box_filter(frame, options.smoothing_radius);
  const int rows = frame.rows, cols = frame.cols;
  auto idx = [cols](int r, int c) { return static_cast<std::size_t>(r) * cols + c; };

  std::vector<int> label(smooth.size(), -1);
  std::vector<int> sizes;
  std::vector<bool> border;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (smooth[idx(r, c)] < options.threshold || label[idx(r, c)] >= 0) continue;
      const int id = static_cast<int>(sizes.size());
      sizes.push_back(0);
      border.push_back(false);
      stack.assign(1, {r, c});
      label[idx(r, c)] = id;
      while (!stack.empty()) {
        const auto [pr, pc] = stack.back();
        stack.pop_back();
        ++sizes[static_cast<std::size_t>(id)];
        if (pr == 0 || pc == 0 || pr == rows - 1 || pc == cols - 1) border[static_cast<std::size_t>(id)] = true;
        const int nr[] = {pr - 1, pr + 1, pr, pr};
        const int nc[] = {pc, pc, pc - 1, pc + 1};
        for (int k = 0; k < 4; ++k) {
          if (nr[k] < 0 || nr[k] >= rows || nc[k] < 0 || nc[k] >= cols) continue;
          const std::size_t j = idx(nr[k], nc[k]);
          if (label[j] >= 0 || smooth[j] < options.threshold) continue;
          label[j] = id;
          stack.emplace_back(nr[k], nc[k]);
        }
      }
    }
  }

  int largest = -1;
  int regions = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < options.min_area_pixels) continue;
    ++regions;
    if (largest < 0 || sizes[i] > sizes[static_cast<std::size_t>(largest)]) largest = static_cast<int>(i);
  }
  if (largest < 0) return std::nullopt;

  // Padded field holding only the chosen region above threshold.
  const int prow = rows + 2, pcol = cols + 2;
  const double below = options.threshold - 1.0;
  std::vector<double> field(static_cast<std::size_t>(prow) * pcol, below);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = smooth[idx(r, c)];
      const bool mine = label[idx(r, c)] == largest;
      field[static_cast<std::size_t>(r + 1) * pcol + (c + 1)] = mine ? v : std::min(v, below);
    }
  }
  // Values below threshold but inside the chosen region's neighbourhood keep
  // their intensities for sub-pixel interpolation.
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double v = smooth[idx(r, c)];
      if (v < options.threshold) field[static_cast<std::size_t>(r + 1) * pcol + (c + 1)] = v;
    }
  }

  auto loops = marching_squares(field, prow, pcol, options.threshold);
  if (loops.empty()) return std::nullopt;
  auto outer = std::max_element(loops.begin(), loops.end(), [](const auto& a, const auto& b) {
    return std::abs(signed_area(a)) < std::abs(signed_area(b));
  });
  std::vector<Vec2> boundary = *outer;
  if (signed_area(boundary) < 0.0) std::reverse(boundary.begin(), boundary.end());

  Segmentation seg;
  seg.region_count = regions;
  seg.touches_border = border[static_cast<std::size_t>(largest)];
  seg.area_pixels = sizes[static_cast<std::size_t>(largest)];
  seg.contour.timestamp = frame.timestamp;
  seg.contour.points = resample_by_angle(boundary, polygon_centroid(boundary), options.resample);
  if (static_cast<int>(seg.contour.points.size()) != options.resample) return std::nullopt;
  return seg;
}

std::vector<Vec3> backproject(const BoundaryContour& contour, const FrameCalibration& calib,
                              const RigidTransform& T_C_M) {
  const RigidTransform chain = T_C_M * calib.T_M_D * calib.T_D_U;
  std::vector<Vec3> out;
  out.reserve(contour.points.size());
  for (const Vec2& p : contour.points) {
    out.push_back(chain.apply(Vec3(p.x() * calib.pixel_spacing, p.y() * calib.pixel_spacing, 0.0)));
  }
  return out;
}

std::vector<Vec2> project_to_image(const std::vector<Vec3>& points, const FrameCalibration& calib,
                                   const RigidTransform& T_C_M) {
  const RigidTransform inv = (T_C_M * calib.T_M_D * calib.T_D_U).inverse();
  std::vector<Vec2> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    const Vec3 u = inv.apply(p);
    out.emplace_back(u.x() / calib.pixel_spacing, u.y() / calib.pixel_spacing);
  }
  return out;
}

double TumourMesh::volume() const {
  double v = 0.0;
  for (const Triangle& f : faces) {
    v += vertices[static_cast<std::size_t>(f.a)].dot(
        vertices[static_cast<std::size_t>(f.b)].cross(vertices[static_cast<std::size_t>(f.c)]));
  }
  return v / 6.0;
}

Vec3 TumourMesh::centroid() const {
  // Tetrahedra against a local origin for numerical stability.
  Vec3 origin = Vec3::Zero();
  for (const Vec3& p : vertices) origin += p;
  origin /= static_cast<double>(vertices.size());
  double total = 0.0;
  Vec3 acc = Vec3::Zero();
  for (const Triangle& f : faces) {
    const Vec3 a = vertices[static_cast<std::size_t>(f.a)] - origin;
    const Vec3 b = vertices[static_cast<std::size_t>(f.b)] - origin;
    const Vec3 c = vertices[static_cast<std::size_t>(f.c)] - origin;
    const double v = a.dot(b.cross(c)) / 6.0;
    total += v;
    acc += v * (a + b + c) / 4.0;
  }
  if (std::abs(total) < 1e-15) throw Error("mesh: zero volume");
  return origin + acc / total;
}

bool TumourMesh::is_watertight() const {
  std::map<std::pair<int, int>, int> edges;
  for (const Triangle& f : faces) {
    const int v[] = {f.a, f.b, f.c};
    for (int k = 0; k < 3; ++k) {
      const int a = v[k], b = v[(k + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  return !edges.empty() && std::all_of(edges.begin(), edges.end(), [](const auto& e) { return e.second == 2; });
}

TumourMesh build_mesh(const std::vector<std::vector<Vec3>>& contours) {
  if (contours.size() < 2) throw Error("insufficient frames");
  const std::size_t k = contours.front().size();
  if (k < 3) throw Error("build_mesh: contours need at least 3 points");
  for (const auto& c : contours) {
    if (c.size() != k) throw Error("build_mesh: contours must have equal point counts");
  }

  TumourMesh mesh;
  const int K = static_cast<int>(k);
  const int m = static_cast<int>(contours.size());
  for (int i = 0; i < m; ++i) {
    for (const Vec3& p : contours[static_cast<std::size_t>(i)]) {
      if (!p.allFinite()) throw Error("build_mesh: non-finite vertex");
      mesh.vertices.push_back(p);
      mesh.vertex_contour.push_back(i);
    }
  }
  for (int i = 0; i + 1 < m; ++i) {
    for (int j = 0; j < K; ++j) {
      const int a = i * K + j, b = i * K + (j + 1) % K;
      const int c = (i + 1) * K + (j + 1) % K, d = (i + 1) * K + j;
      mesh.faces.push_back({a, b, c});
      mesh.faces.push_back({a, c, d});
    }
  }
  auto centre_of = [&](int ring) {
    Vec3 s = Vec3::Zero();
    for (const Vec3& p : contours[static_cast<std::size_t>(ring)]) s += p;
    return Vec3(s / static_cast<double>(K));
  };
  const int first_cap = static_cast<int>(mesh.vertices.size());
  mesh.vertices.push_back(centre_of(0));
  mesh.vertex_contour.push_back(-1);
  const int last_cap = first_cap + 1;
  mesh.vertices.push_back(centre_of(m - 1));
  mesh.vertex_contour.push_back(-1);
  for (int j = 0; j < K; ++j) {
    mesh.faces.push_back({first_cap, (j + 1) % K, j});
    mesh.faces.push_back({last_cap, (m - 1) * K + j, (m - 1) * K + (j + 1) % K});
  }
  if (mesh.volume() < 0.0) {
    for (Triangle& f : mesh.faces) std::swap(f.b, f.c);
  }
  return mesh;
}

ScoreReport score(const TumourMesh& mesh, const Ellipsoid& truth) {
  if (mesh.vertices.size() < 4 || mesh.faces.size() < 4 || !(std::abs(mesh.volume()) > 1e-12)) {
    throw Error("score: degenerate mesh");
  }
  ScoreReport report;
  report.mesh_centroid = mesh.centroid();
  report.location_error = (report.mesh_centroid - truth.center).norm();

  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : mesh.vertices) mean += p;
  mean /= static_cast<double>(mesh.vertices.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : mesh.vertices) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  Vec3 d = solver.eigenvectors().col(2);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d(k)) > 1e-12) {
      if (d(k) < 0.0) d = -d;
      break;
    }
  }
  report.principal_direction = d;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Vec3& p : mesh.vertices) {
    lo = std::min(lo, p.dot(d));
    hi = std::max(hi, p.dot(d));
  }
  report.mesh_extent = hi - lo;
  report.ellipsoid_extent = truth.width_along(d);
  report.diameter_error = std::abs(report.mesh_extent - report.ellipsoid_extent);
  return report;
}

Reconstruction reconstruct_from_scan(const ScanLog& log, const FrameCalibration& calib,
                                     const ReconstructionOptions& options) {
  struct Candidate {
    int frame;
    BoundaryContour contour;
  };
  std::map<int, std::vector<Candidate>> by_line;
  int complete = 0;
  for (std::size_t i = 0; i < log.frames.size(); ++i) {
    const CapturedFrame& f = log.frames[i];
    if (f.line < 0) continue;
    auto seg = segment_frame(f.image, options.segmentation);
    if (!seg || seg->touches_border) continue;
    ++complete;
    by_line[f.line].push_back({static_cast<int>(i), std::move(seg->contour)});
  }
  int best_line = -1;
  std::size_t best_count = 0;
  for (const auto& [line, cands] : by_line) {
    if (cands.size() > best_count) {
      best_count = cands.size();
      best_line = line;
    }
  }
  if (best_count < 2) throw Error("insufficient frames");

  Reconstruction rec;
  rec.line = best_line;
  rec.detected_contours = complete;
  std::vector<std::vector<Vec3>> rings;
  for (const Candidate& c : by_line[best_line]) {
    const CapturedFrame& f = log.frames[static_cast<std::size_t>(c.frame)];
    std::vector<Vec3> pts = backproject(c.contour, calib, f.marker_detected);
    if (options.motion_corrected) {
      const Vec3 shift = predict_displacement(f.model, log.basis, f.t);
      for (Vec3& p : pts) p -= shift;
    }
    rings.push_back(std::move(pts));
    rec.frames.push_back(c.frame);
  }
  rec.mesh = build_mesh(rings);
  return rec;
}

}  // namespace mcscan
