#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "mcscan/config.hpp"
#include "mcscan/io.hpp"
#include "support.hpp"

using namespace mcscan;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void expect_rejected(const std::string& yaml, const std::string& fragment) {
  try {
    parse_config(yaml);
    FAIL() << "accepted: " << yaml;
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

}  // namespace

// --- Config ---------------------------------------------------------------------

TEST(Config, DefaultsAreValid) {
  const ExperimentConfig c = default_config();
  EXPECT_NO_THROW(c.validate());
  ASSERT_EQ(c.profiles.size(), 3u);
  EXPECT_EQ(c.profile("P2").tau, 125.0);
  EXPECT_EQ(c.profile("P3").b, 5.0);
  EXPECT_EQ(c.phantom("dome").surface, "dome");
  EXPECT_THROW(c.profile("P9"), Error);
  EXPECT_THROW(c.phantom("cube"), Error);
  for (const MotionProfile& p : c.profiles) EXPECT_GE(p.learn_frames, 2 * p.tau + 1);
}

TEST(Config, EmptyDocumentKeepsDefaults) {
  EXPECT_EQ(dump_config(parse_config("")), dump_config(default_config()));
  EXPECT_EQ(dump_config(parse_config("{}")), dump_config(default_config()));
}

TEST(Config, DumpParseRoundTrip) {
  ExperimentConfig c = default_config();
  c.seed = 123456789012345ULL;
  c.model_degree = 2;
  c.servo.mode = CompensationMode::AsPrinted;
  c.profiles[1].phi = 0.1234567890123;
  c.speckle.correlation_length = 1.0 / 3.0;
  c.calib.T_M_D = RigidTransform::translation(0.1, 0.2, -70) * RigidTransform::rot_y(0.37);
  c.e3.start = StartCorner::MaxXMinY;
  c.e3.ablation_profile = "";
  c.e1.axes = {"z"};
  const std::string text = dump_config(c);
  const ExperimentConfig d = parse_config(text);
  EXPECT_EQ(dump_config(d), text);
  EXPECT_EQ(d.seed, c.seed);
  EXPECT_EQ(d.servo.mode, CompensationMode::AsPrinted);
  EXPECT_EQ(d.profiles[1].phi, c.profiles[1].phi);
  EXPECT_EQ(d.speckle.correlation_length, c.speckle.correlation_length);
  EXPECT_EQ(d.calib.T_M_D.row_major_3x4(), c.calib.T_M_D.row_major_3x4());
}

TEST(Config, PartialOverridesAndRpyTransforms) {
  const ExperimentConfig c = parse_config(R"(
seed: 9
profiles:
  - {name: Q, tau: 50, b: 2, axis: z, tracker_sigma: 1, learn_frames: 120}
calibration:
  T_E_M: {translation: [1, 2, 3], rpy_deg: [0, 0, 90]}
servo: {mode: as_printed, reach_angle_deg: 1}
e3: {ablation_profile: ""}
)");
  EXPECT_EQ(c.seed, 9u);
  ASSERT_EQ(c.profiles.size(), 1u);
  EXPECT_EQ(c.profiles[0].name, "Q");
  EXPECT_EQ(c.profiles[0].phi, std::numbers::pi / 2);
  EXPECT_NEAR(c.servo.reach_angle, std::numbers::pi / 180.0, 1e-15);
  const Mat4 expected = test::H(RigidTransform::translation(1, 2, 3) * RigidTransform::rot_z(std::numbers::pi / 2));
  EXPECT_LT(test::max_abs(test::H(c.calib.T_E_M), expected), 1e-12);
  // Untouched sections keep defaults.
  EXPECT_EQ(c.image.rows, 128);
  EXPECT_EQ(c.phantoms.size(), 2u);
}

TEST(Config, RejectsBadInput) {
  expect_rejected("seed: [1, 2", "config");
  expect_rejected("profiles:\n  - {name: A, tau: -3}\ne3: {ablation_profile: ''}", "tau");
  expect_rejected("profiles:\n  - {name: A, tau: 100, learn_frames: 150}\ne3: {ablation_profile: ''}", "learn_frames");
  expect_rejected("e3: {ablation_profile: P7}", "P7");
  expect_rejected("servo: {mode: twice}", "twice");
  expect_rejected("phantoms:\n  - {name: x, surface: cone}", "cone");
  expect_rejected("e3: {start_corner: middle}", "middle");
  expect_rejected("e1: {axes: [w]}", "w");
  expect_rejected("calibration: {T_E_M: {matrix: [1, 0, 0, 0, 0, 2, 0, 0, 0, 0, 1, 0]}}", "T_E_M");
  expect_rejected("imaging: {rows: 0}", "rows");
  expect_rejected("model_degree: 0", "model_degree");
}

TEST(Config, RejectsUnknownKeys) {
  expect_rejected("bogus: 1", "bogus");
  expect_rejected("servo: {lookahed: 2}", "servo.lookahed");
  expect_rejected("profiles:\n  - {name: A, tau: 100, learn_frames: 201, amp: 3}", "profiles.amp");
  expect_rejected("phantoms:\n  - {name: f, tumour: {centre: [0, 0, -5]}}", "tumour.centre");
  // The pose form is accepted for every transform.
  EXPECT_NO_THROW(parse_config("calibration: {T_C_B: {translation: [1, 2, 3], rpy_deg: [0, 0, 10]}}"));
}

TEST(Config, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path() / "mcscan_cfg_test";
  write_text(dir / "c.yaml", "seed: 42\n");
  EXPECT_EQ(load_config(dir / "c.yaml").seed, 42u);
  EXPECT_THROW(load_config(dir / "missing.yaml"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Config, AxisNames) {
  EXPECT_EQ(axis_from_name("x"), Vec3::UnitX());
  EXPECT_EQ(axis_from_name("y"), Vec3::UnitY());
  EXPECT_EQ(axis_from_name("z"), Vec3::UnitZ());
  EXPECT_THROW(axis_from_name("q"), Error);
}

TEST(Config, DomePhantomHeights) {
  PhantomSpec s = default_config().phantom("dome");
  const TissuePhantom p = s.build();
  EXPECT_NEAR(p.surface.height(Vec2(0, 0)), s.height, 1e-12);
  const double R = s.dome_radius;
  EXPECT_NEAR(p.surface.height(Vec2(10, 5)), s.height - R + std::sqrt(R * R - 125.0), 1e-9);
  EXPECT_NO_THROW(p.validate());
}

// --- IO ------------------------------------------------------------------------

TEST(Io, FormatDoubleRoundTrips) {
  std::mt19937_64 g(61);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(g) * std::pow(10.0, static_cast<int>(g() % 40) - 20);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.0), "0");
  EXPECT_EQ(format_double(-0.0), "0");
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3.0), "3");
}

TEST(Io, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Io, WriteTextCreatesDirectories) {
  const auto dir = std::filesystem::temp_directory_path() / "mcscan_io_test";
  std::filesystem::remove_all(dir);
  write_text(dir / "a" / "b" / "f.txt", "hello\n");
  EXPECT_EQ(slurp(dir / "a" / "b" / "f.txt"), "hello\n");
  std::filesystem::remove_all(dir);
}

TEST(Io, FrameEncodings) {
  UltrasoundFrame f;
  f.rows = 2;
  f.cols = 3;
  f.intensities = {0.0, 0.5, 1.0, 1.5, -1.0, 0.25};
  const std::string pgm = frame_pgm(f);
  const std::string header = "P5\n3 2\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 6);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  const auto* px = reinterpret_cast<const unsigned char*>(pgm.data() + header.size());
  EXPECT_EQ(px[0], 0);
  EXPECT_EQ(px[2], 255);
  EXPECT_EQ(px[3], 255);
  EXPECT_EQ(px[4], 0);
  const std::string raw = frame_raw(f);
  ASSERT_EQ(raw.size(), 6 * sizeof(float));
  float v;
  std::memcpy(&v, raw.data() + 4, 4);
  EXPECT_EQ(v, 0.5f);
}

TEST(Io, MeshFormats) {
  TumourMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  m.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  EXPECT_NEAR(m.volume(), 1.0 / 6.0, 1e-15);
  const std::string stl = mesh_stl(m);
  EXPECT_EQ(stl.rfind("solid tumour", 0), 0u);
  std::size_t facets = 0;
  for (std::size_t p = stl.find("facet normal"); p != std::string::npos; p = stl.find("facet normal", p + 1)) ++facets;
  EXPECT_EQ(facets, 4u);
  const std::string obj = mesh_obj(m);
  EXPECT_NE(obj.find("f 1 3 2"), std::string::npos);
  EXPECT_NE(obj.find("v 0 0 1"), std::string::npos);
}

TEST(Io, TrajectoryCsvHasOneRowPerWaypoint) {
  ScanTrajectory tr;
  Waypoint w;
  w.desired_marker = RigidTransform::translation(1, 2, 3);
  tr.waypoints = {w, w, w};
  const std::string csv = trajectory_csv(tr);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.rfind("index,line,px,py,pz,nx,ny,nz,m00", 0), 0u);
}
