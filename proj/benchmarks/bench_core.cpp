#include <benchmark/benchmark.h>

#include <cmath>

#include "mcscan/geometry.hpp"
#include "mcscan/motion.hpp"
#include "mcscan/random.hpp"
#include "mcscan/tissue.hpp"
#include "mcscan/ultrasound.hpp"

using namespace mcscan;

namespace {

MotionTrace breathing_trace(int frames) {
  const RespiratoryModel m{100.0, 3.0, 125.0, 0.4, 3};
  Rng rng(7);
  MotionTrace tr;
  for (int i = 0; i < frames; ++i) {
    tr.times.push_back(i);
    tr.values.push_back(m.evaluate(i) + rng.normal(0.1));
  }
  return tr;
}

TissuePhantom phantom() {
  TissuePhantom p;
  p.surface = Heightfield::flat(-40, 40, -40, 40, 1.0, 0.0);
  p.tumour.center = Vec3(0, 0, -12);
  p.tumour.semi_axes = Vec3(5, 5, 5);
  return p;
}

void BM_FitModel(benchmark::State& state) {
  const MotionTrace tr = breathing_trace(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_model(tr, 3));
}
BENCHMARK(BM_FitModel)->Arg(375)->Arg(1000);

void BM_Acquire(benchmark::State& state) {
  const TissuePhantom p = phantom();
  ImageSpec spec;
  SpeckleModel speckle;
  speckle.enabled = state.range(0) != 0;
  speckle.correlation_length = 1.0;
  speckle.electronic_sigma = 0.02;
  const RigidTransform probe = RigidTransform::translation(Vec3(0, 0, 0)) * RigidTransform::rot_x(M_PI);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(acquire(p, RigidTransform::identity(), probe, spec, speckle, ++seed));
}
BENCHMARK(BM_Acquire)->Arg(0)->Arg(1);

void BM_Ncc(benchmark::State& state) {
  const TissuePhantom p = phantom();
  ImageSpec spec;
  SpeckleModel speckle;
  speckle.enabled = true;
  const RigidTransform probe = RigidTransform::rot_x(M_PI);
  const auto a = acquire(p, RigidTransform::identity(), probe, spec, speckle, 1);
  const auto b = acquire(p, RigidTransform::translation(Vec3(0.5, 0, 0)), probe, spec, speckle, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ncc(a, b));
}
BENCHMARK(BM_Ncc);

void BM_Compose(benchmark::State& state) {
  const RigidTransform a = RigidTransform::axis_angle(Vec3(1, 2, 3), 0.7) * RigidTransform::translation(Vec3(1, 2, 3));
  const RigidTransform b = RigidTransform::axis_angle(Vec3(-1, 0, 2), 1.1) * RigidTransform::translation(Vec3(4, 0, 1));
  for (auto _ : state) benchmark::DoNotOptimize(a * b);
}
BENCHMARK(BM_Compose);

}  // namespace

BENCHMARK_MAIN();
