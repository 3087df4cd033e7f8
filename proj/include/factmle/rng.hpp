#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace factmle {

/// Seeded pseudo-random generator used for synthetic data and random
/// initialization.
///
/// The engine is std::mt19937_64 (bit-exact across platforms). Variate
/// transforms are implemented here rather than through
/// std::*_distribution, whose output is implementation-defined:
///   - uniforms take the top 53 bits of the engine output,
///   - normals use the Marsaglia polar method,
///   - exponentials use inverse-CDF sampling.
/// Identical seeds therefore produce identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (lo, hi] (never returns lo exactly).
  double uniform_open(double lo, double hi) {
    return hi - (hi - lo) * uniform();
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    have_spare_ = true;
    return mean + stddev * u * scale;
  }

  /// Exponential variate with the given mean (mean = 1/rate).
  double exponential(double mean) {
    // 1 - uniform() lies in (0, 1], so the log is finite.
    return -mean * std::log(1.0 - uniform());
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace factmle
