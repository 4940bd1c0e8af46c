#include "mcscan/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include "json.hpp"
#include <openssl/evp.h>

namespace mcscan {

namespace {

void append_pose(std::string& out, const RigidTransform& t) {
  for (double v : t.row_major_3x4()) {
    out += ',';
    out += format_double(v);
  }
}

std::string pose_header(const std::string& prefix) {
  std::string h;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) h += fmt::format(",{}{}{}", prefix, r, c);
  return h;
}

nlohmann::ordered_json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  if (v == 0.0) return "0";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed for " + path.string());
}

std::string trajectory_csv(const ScanTrajectory& trajectory) {
  std::string out = "index,line,px,py,pz,nx,ny,nz" + pose_header("m") + "\n";
  for (std::size_t i = 0; i < trajectory.waypoints.size(); ++i) {
    const Waypoint& w = trajectory.waypoints[i];
    out += fmt::format("{},{}", i, w.line);
    for (int k = 0; k < 3; ++k) out += "," + format_double(w.surface_point(k));
    for (int k = 0; k < 3; ++k) out += "," + format_double(w.normal(k));
    append_pose(out, w.desired_marker);
    out += '\n';
  }
  return out;
}

std::string scan_log_csv(const ScanLog& log) {
  std::string out =
      "t,waypoint,frame,residual_mm,residual_rad,linear_step_mm,angular_step_rad,saturated,phi" + pose_header("e") +
      "\n";
  for (const TickRecord& r : log.ticks) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}", format_double(r.t), r.waypoint, r.frame,
                       format_double(r.residual_position), format_double(r.residual_angle),
                       format_double(r.linear_step), format_double(r.angular_step), r.saturated ? 1 : 0,
                       format_double(r.model.phi));
    append_pose(out, r.executed);
    out += '\n';
  }
  return out;
}

std::string scan_log_json(const ScanLog& log) {
  nlohmann::ordered_json j;
  j["completed"] = log.completed;
  j["aborted"] = log.aborted;
  j["diagnostic"] = log.diagnostic;
  j["ticks"] = log.ticks.size();
  j["frames"] = log.frames.size();
  std::size_t saturated = 0;
  for (const TickRecord& r : log.ticks) saturated += r.saturated ? 1 : 0;
  j["saturated_ticks"] = saturated;
  j["basis"]["axes"] = {vec_json(log.basis.axes.row(0)), vec_json(log.basis.axes.row(1)),
                        vec_json(log.basis.axes.row(2))};
  j["basis"]["eigenvalues"] = vec_json(log.basis.eigenvalues);
  return j.dump(2) + "\n";
}

std::string fit_report_json(const FitReport& report) {
  nlohmann::ordered_json j;
  j["z0"] = report.model.z0;
  j["b"] = report.model.b;
  j["tau"] = report.model.tau;
  j["phi"] = report.model.phi;
  j["n"] = report.model.n;
  j["residual_rms"] = report.residual_rms;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  return j.dump(2) + "\n";
}

std::string mesh_stl(const TumourMesh& mesh, const std::string& name) {
  std::string out = "solid " + name + "\n";
  for (const Triangle& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f.a)];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f.b)];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f.c)];
    Vec3 n = (b - a).cross(c - a);
    if (n.norm() > 0.0) n.normalize();
    out += fmt::format("  facet normal {:.6e} {:.6e} {:.6e}\n    outer loop\n", n.x(), n.y(), n.z());
    for (const Vec3* v : {&a, &b, &c}) out += fmt::format("      vertex {:.9e} {:.9e} {:.9e}\n", v->x(), v->y(), v->z());
    out += "    endloop\n  endfacet\n";
  }
  out += "endsolid " + name + "\n";
  return out;
}

std::string mesh_obj(const TumourMesh& mesh) {
  std::string out;
  for (const Vec3& v : mesh.vertices) out += fmt::format("v {:.9g} {:.9g} {:.9g}\n", v.x(), v.y(), v.z());
  for (const Triangle& f : mesh.faces) out += fmt::format("f {} {} {}\n", f.a + 1, f.b + 1, f.c + 1);
  return out;
}

std::string score_json(const ScoreReport& score, const Ellipsoid& truth) {
  nlohmann::ordered_json j;
  j["location_error_mm"] = score.location_error;
  j["diameter_error_mm"] = score.diameter_error;
  j["mesh_extent_mm"] = score.mesh_extent;
  j["ellipsoid_extent_mm"] = score.ellipsoid_extent;
  j["principal_direction"] = vec_json(score.principal_direction);
  j["mesh_centroid"] = vec_json(score.mesh_centroid);
  j["truth_center"] = vec_json(truth.center);
  j["truth_semi_axes"] = vec_json(truth.semi_axes);
  return j.dump(2) + "\n";
}

std::string frame_pgm(const UltrasoundFrame& frame) {
  std::string out = fmt::format("P5\n{} {}\n255\n", frame.cols, frame.rows);
  out.reserve(out.size() + frame.intensities.size());
  for (double v : frame.intensities) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

std::string frame_raw(const UltrasoundFrame& frame) {
  std::string out(frame.intensities.size() * 4, '\0');
  for (std::size_t i = 0; i < frame.intensities.size(); ++i) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(frame.intensities[i]));
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(out.data() + 4 * i, &bits, 4);
  }
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace mcscan
