#pragma once

#include <cstdint>
#include <random>

namespace eit {

// Seeded generator with platform-independent distributions. The standard
// <random> distributions are implementation-defined, so only the raw
// mt19937_64 stream is used and every transform is done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal();
  // Normal(0, sigma) resampled until it falls inside [-2 sigma, 2 sigma].
  double truncated_normal(double sigma);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace eit
