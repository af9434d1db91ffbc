#pragma once

#include <cstdint>
#include <random>

namespace ssattn {

// Seeded 64-bit Mersenne Twister with the handful of draws the project needs.
// Streams derived from (seed, stream) are independent of each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t next() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive range.
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    return lo + static_cast<std::int64_t>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
  }

  // Normal resampled until it lands within two standard deviations.
  double truncated_normal(double stddev) {
    for (;;) {
      const double v = normal(0.0, 1.0);
      if (v >= -2.0 && v <= 2.0) return v * stddev;
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ssattn
