#pragma once

#include <cmath>
#include <cstdint>

namespace awf {

/// Deterministic splittable random stream (splitmix64).
///
/// The 64-bit integer stream is bit-identical across platforms for a given
/// seed; uniform doubles are derived from it with exact IEEE operations.
/// normal() uses Box-Muller and is reproducible wherever libm sqrt/log/cos
/// are correctly rounded, which holds on every platform this project targets.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0,1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Inclusive integer range. Modulo bias is negligible for the small ranges
  /// used here and keeps the stream platform-exact.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal() {
    double u1 = next_double();
    const double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Independent child stream; the parent stream is not advanced.
  Rng split(std::uint64_t key) const {
    std::uint64_t z = state_ ^ (key * 0xD1B54A32D192ED03ull + 0x632BE59BD9B4E019ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t state_;
};

}  // namespace awf
