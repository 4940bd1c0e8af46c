#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mcscan/motion.hpp"
#include "mcscan/planner.hpp"
#include "mcscan/reconstruction.hpp"
#include "mcscan/servo.hpp"
#include "mcscan/ultrasound.hpp"

namespace mcscan {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Writes `text` to `path`, creating parent directories. Throws Error on failure.
void write_text(const std::filesystem::path& path, const std::string& text);

/// index, line, surface xyz, normal xyz, desired marker pose (row-major 3x4).
std::string trajectory_csv(const ScanTrajectory& trajectory);

/// One row per control tick.
std::string scan_log_csv(const ScanLog& log);

/// Summary of a scan: completion, tick/frame counts, diagnostic, basis.
std::string scan_log_json(const ScanLog& log);

std::string fit_report_json(const FitReport& report);

std::string mesh_stl(const TumourMesh& mesh, const std::string& name = "tumour");
std::string mesh_obj(const TumourMesh& mesh);

std::string score_json(const ScoreReport& score, const Ellipsoid& truth);

/// 8-bit binary PGM (intensities clamped to [0, 1]).
std::string frame_pgm(const UltrasoundFrame& frame);
/// Little-endian float32 grid, rows * cols values, row-major.
std::string frame_raw(const UltrasoundFrame& frame);

/// Hex SHA-256 digest.
std::string sha256_hex(const std::string& data);

}  // namespace mcscan
