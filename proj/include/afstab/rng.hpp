#pragma once

// Counter-based random streams: every draw is splitmix64 of (seed, stream,
// counter), so a stream's output does not depend on scheduling.

#include <cmath>
#include <cstdint>

#include "afstab/conformal.hpp"

namespace afstab {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream) : key_(splitmix64(seed) ^ splitmix64(~stream)) {}

  /// Independent child stream, e.g. one per pair or per m value.
  RandomStream split(std::uint64_t child) const { return RandomStream(key_, child); }

  std::uint64_t next_u64() { return splitmix64(key_ + splitmix64(counter_++)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform in the Euclidean ball of radius r about c (rejection from the cube).
  Vec3 in_ball(const Vec3& c, double r) {
    for (;;) {
      const Vec3 v(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
      if (v.squaredNorm() <= 1.0) return c + r * v;
    }
  }

  Vec3 unit_vector() {
    for (;;) {
      const Vec3 v(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
      const double n = v.norm();
      if (n > 1e-3 && n <= 1.0) return v / n;
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace afstab
