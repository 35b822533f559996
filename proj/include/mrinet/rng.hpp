#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace mrinet {

// Deterministic generator: std::mt19937_64 (bit sequence fixed by the C++
// standard) with library-side conversions to real and bounded values, so
// streams do not depend on the standard library's distribution classes.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double low, double high) { return low + (high - low) * uniform(); }

  // Box-Muller, one variate per call.
  double gaussian(double mean, double stddev);

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer over (seed, stream); derives independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// 64-bit FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace mrinet
