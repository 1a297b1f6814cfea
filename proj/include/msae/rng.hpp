#pragma once

#include <cstdint>
#include <random>

namespace msae {

/// Portable pseudo-random source. The engine is mt19937_64, whose output
/// sequence is fixed by the standard; uniform and normal variates are derived
/// here rather than through the implementation-defined std distributions so
/// that a seed reproduces the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal (Marsaglia polar method).
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent sub-seed from a master seed and stream indices
/// (splitmix64 finalizer chained over the inputs).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t sub = 0);

}  // namespace msae
