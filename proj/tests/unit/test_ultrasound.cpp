#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mcscan/ultrasound.hpp"
#include "support.hpp"

using namespace mcscan;

namespace {

TissuePhantom sphere_phantom(double radius = 4.0) {
  TissuePhantom p;
  p.surface = Heightfield::flat(-40, 40, -40, 40, 0.5, 0.0);
  p.tumour.center = Vec3(0, 0, -12);
  p.tumour.semi_axes = Vec3::Constant(radius);
  return p;
}

// Beam (+z of the transducer) pointing down into the tissue, image plane XZ.
RigidTransform probe_at(const Vec3& p) { return RigidTransform::translation(p) * RigidTransform::rot_x(std::numbers::pi); }

int count_inside(const UltrasoundFrame& f, double level) {
  int n = 0;
  for (double v : f.intensities) n += std::abs(v - level) < 1e-12;
  return n;
}

// Widest run of tumour pixels along any row.
int max_row_run(const UltrasoundFrame& f, double level) {
  int best = 0;
  for (int r = 0; r < f.rows; ++r) {
    int run = 0;
    for (int c = 0; c < f.cols; ++c) run += std::abs(f.at(r, c) - level) < 1e-12;
    best = std::max(best, run);
  }
  return best;
}

UltrasoundFrame make_frame(int rows, int cols, std::vector<double> v) {
  UltrasoundFrame f;
  f.rows = rows;
  f.cols = cols;
  f.intensities = std::move(v);
  return f;
}

}  // namespace

TEST(Acquire, UniformBackground) {
  const TissuePhantom ph = sphere_phantom();
  const UltrasoundFrame f = acquire(ph, RigidTransform::identity(), probe_at(Vec3(25, 25, 0)), ImageSpec{});
  for (double v : f.intensities) EXPECT_DOUBLE_EQ(v, ph.intensity_outside);
}

TEST(Acquire, AirAboveSurface) {
  const TissuePhantom ph = sphere_phantom();
  // Lifted 2 mm: the first 10 rows (0.2 mm each) are above the surface. Row 10 sits on it.
  const UltrasoundFrame f = acquire(ph, RigidTransform::identity(), probe_at(Vec3(25, 25, 2.0)), ImageSpec{});
  for (int r = 0; r < f.rows; ++r)
    for (int c = 0; c < f.cols; ++c) EXPECT_DOUBLE_EQ(f.at(r, c), r < 10 ? 0.0 : ph.intensity_outside) << r;
}

TEST(Acquire, SphereCrossSectionArea) {
  const TissuePhantom ph = sphere_phantom();
  ImageSpec spec;
  const UltrasoundFrame f = acquire(ph, RigidTransform::identity(), probe_at(Vec3::Zero()), spec);
  const double expected = std::numbers::pi * 16.0 / (spec.spacing * spec.spacing);
  EXPECT_NEAR(count_inside(f, ph.intensity_inside), expected, 0.02 * expected);
  // Diameter in pixels along the widest row.
  EXPECT_NEAR(max_row_run(f, ph.intensity_inside) * spec.spacing, 8.0, 2 * spec.spacing);
}

TEST(Acquire, ChordMatchesOffset) {
  const TissuePhantom ph = sphere_phantom();
  ImageSpec spec;
  for (double d : {0.0, 1.0, 2.0, 3.0, 3.5}) {
    const UltrasoundFrame f = acquire(ph, RigidTransform::identity(), probe_at(Vec3(0, d, 0)), spec);
    const double chord = 2.0 * std::sqrt(16.0 - d * d);
    EXPECT_NEAR(max_row_run(f, ph.intensity_inside) * spec.spacing, chord, 2 * spec.spacing) << "d=" << d;
  }
  const UltrasoundFrame miss = acquire(ph, RigidTransform::identity(), probe_at(Vec3(0, 4.5, 0)), spec);
  EXPECT_EQ(count_inside(miss, ph.intensity_inside), 0);
}

TEST(Acquire, SupersamplingAveragesBoundary) {
  const TissuePhantom ph = sphere_phantom();
  ImageSpec spec;
  spec.supersample = 4;
  const UltrasoundFrame f = acquire(ph, RigidTransform::identity(), probe_at(Vec3::Zero()), spec);
  // Mean over the image equals the area-weighted mix of the two intensities.
  double sum = 0.0;
  for (double v : f.intensities) sum += v;
  const double px = spec.spacing * spec.spacing;
  const double disc = std::numbers::pi * 16.0 / px;
  const double n = static_cast<double>(f.intensities.size());
  const double expected = (disc * ph.intensity_inside + (n - disc) * ph.intensity_outside) / n;
  // Row 0 is half a pixel above the surface after area averaging.
  const double row0_air = 0.5 * spec.cols * ph.intensity_outside / n;
  EXPECT_NEAR(sum / n, expected - row0_air, 1e-3);
}

TEST(Acquire, RigidEquivariance) {
  // Moving tissue and probe together leaves the image unchanged; boundary
  // pixels may flip through rounding, so allow a handful.
  TissuePhantom ph = sphere_phantom();
  SpeckleModel sp;
  sp.enabled = true;
  sp.seed = 5;
  sp.correlation_length = 1.0;
  std::mt19937_64 g(31);
  const RigidTransform probe = probe_at(Vec3(1, 0.5, 0));
  const UltrasoundFrame ref = acquire(ph, RigidTransform::identity(), probe, ImageSpec{}, sp);
  for (int i = 0; i < 10; ++i) {
    const RigidTransform G = test::random_transform(g, 50.0);
    const UltrasoundFrame f = acquire(ph, G, G * probe, ImageSpec{}, sp);
    int differing = 0;
    double speckle_err = 0.0;
    for (std::size_t k = 0; k < f.intensities.size(); ++k) {
      const double d = std::abs(f.intensities[k] - ref.intensities[k]);
      if (d > 1e-3) ++differing;
      else speckle_err = std::max(speckle_err, d);
    }
    EXPECT_LE(differing, 16);
    EXPECT_LT(speckle_err, 1e-9);
  }
}

TEST(Acquire, DeterministicAndSeedSensitive) {
  TissuePhantom ph = sphere_phantom();
  SpeckleModel sp;
  sp.enabled = true;
  sp.electronic_sigma = 0.02;
  const auto a = acquire(ph, RigidTransform::identity(), probe_at(Vec3::Zero()), ImageSpec{}, sp, 7);
  const auto b = acquire(ph, RigidTransform::identity(), probe_at(Vec3::Zero()), ImageSpec{}, sp, 7);
  const auto c = acquire(ph, RigidTransform::identity(), probe_at(Vec3::Zero()), ImageSpec{}, sp, 8);
  EXPECT_EQ(a.intensities, b.intensities);
  EXPECT_NE(a.intensities, c.intensities);
  for (double v : a.intensities) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Acquire, InvalidSpec) {
  ImageSpec s;
  s.rows = 0;
  EXPECT_THROW(acquire(sphere_phantom(), {}, probe_at(Vec3::Zero()), s), Error);
  s = {};
  s.spacing = -1;
  EXPECT_THROW(acquire(sphere_phantom(), {}, probe_at(Vec3::Zero()), s), Error);
}

// --- NCC -----------------------------------------------------------------------

TEST(Ncc, SelfAndAffineInvariance) {
  std::mt19937_64 g(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> v(64 * 48);
    for (double& x : v) x = u(g);
    const UltrasoundFrame a = make_frame(64, 48, v);
    const double alpha = 0.1 + 3 * u(g), beta = -2 + 4 * u(g);
    for (double& x : v) x = alpha * x + beta;
    const UltrasoundFrame b = make_frame(64, 48, v);
    EXPECT_NEAR(ncc(a, a), 1.0, 1e-12);
    EXPECT_NEAR(ncc(a, b), 1.0, 1e-12);
  }
}

TEST(Ncc, SymmetricAndBounded) {
  std::mt19937_64 g(33);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> va(100), vb(100);
    for (double& x : va) x = u(g);
    for (std::size_t k = 0; k < vb.size(); ++k) vb[k] = (i % 2 ? -1.0 : 0.5) * va[k] + u(g);
    const auto a = make_frame(10, 10, va), b = make_frame(10, 10, vb);
    const double s = ncc(a, b);
    EXPECT_DOUBLE_EQ(s, ncc(b, a));
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Ncc, AgainstDirectFormula) {
  std::mt19937_64 g(34);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> va(300), vb(300);
  for (std::size_t k = 0; k < va.size(); ++k) {
    va[k] = u(g);
    vb[k] = 0.7 * va[k] + 0.3 * u(g);
  }
  // Pearson correlation computed in long double as an oracle.
  long double ma = 0, mb = 0;
  for (std::size_t k = 0; k < va.size(); ++k) ma += va[k], mb += vb[k];
  ma /= va.size();
  mb /= vb.size();
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < va.size(); ++k) {
    sab += (va[k] - ma) * (vb[k] - mb);
    saa += (va[k] - ma) * (va[k] - ma);
    sbb += (vb[k] - mb) * (vb[k] - mb);
  }
  EXPECT_NEAR(ncc(make_frame(15, 20, va), make_frame(15, 20, vb)), static_cast<double>(sab / std::sqrt(saa * sbb)),
              1e-12);
}

TEST(Ncc, DecreasesWithProbeShift) {
  const TissuePhantom ph = sphere_phantom();
  const auto ref = acquire(ph, {}, probe_at(Vec3::Zero()), ImageSpec{});
  double prev = 1.0 + 1e-12;
  for (double s : {0.0, 0.5, 1.0, 2.0, 3.0, 4.0}) {
    const double v = ncc(ref, acquire(ph, {}, probe_at(Vec3(s, 0, 0)), ImageSpec{}));
    EXPECT_LT(v, prev);
    prev = v;
  }
  // Tissue moving with the probe keeps the image.
  const RigidTransform shift = RigidTransform::translation(3, 0, 0);
  EXPECT_DOUBLE_EQ(ncc(ref, acquire(ph, shift, shift * probe_at(Vec3::Zero()), ImageSpec{})), 1.0);
}

TEST(Ncc, ConstantImageConventions) {
  const auto c1 = make_frame(2, 2, {0.3, 0.3, 0.3, 0.3});
  const auto c2 = make_frame(2, 2, {0.5, 0.5, 0.5, 0.5});
  const auto v = make_frame(2, 2, {0.1, 0.3, 0.5, 0.7});
  EXPECT_EQ(ncc(c1, c1), 1.0);
  EXPECT_EQ(ncc(c1, c2), 0.0);
  EXPECT_EQ(ncc(c1, v), 0.0);
  EXPECT_EQ(ncc(v, c2), 0.0);
  // Anti-correlated images clamp to 0.
  EXPECT_EQ(ncc(v, make_frame(2, 2, {0.7, 0.5, 0.3, 0.1})), 0.0);
}

TEST(Ncc, SizeMismatch) {
  EXPECT_THROW(ncc(make_frame(2, 2, {0, 1, 2, 3}), make_frame(1, 4, {0, 1, 2, 3})), Error);
  EXPECT_THROW(ncc(make_frame(0, 0, {}), make_frame(0, 0, {})), Error);
}
