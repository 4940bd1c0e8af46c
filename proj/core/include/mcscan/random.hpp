#pragma once

#include <cstdint>
#include <random>

#include "mcscan/geometry.hpp"

namespace mcscan {

/// Derives an independent stream seed from a master seed and a stream index.
/// Used so that trial results never depend on scheduling order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Stateless 64-bit mix of several integers (splitmix64 finaliser).
std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0, std::uint64_t d = 0);

/// Maps a hash to a standard normal deviate (Box-Muller on two 32-bit halves).
double hash_to_normal(std::uint64_t h);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double sigma = 1.0);
  double uniform(double lo = 0.0, double hi = 1.0);
  bool bernoulli(double p);
  /// Uniformly distributed direction on the unit sphere.
  Vec3 unit_vector();

 private:
  std::mt19937_64 engine_;
};

}  // namespace mcscan
