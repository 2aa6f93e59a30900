#pragma once

#include <cstdint>

namespace lwnd {

/// SplitMix64. Streams are derived from (seed, index) so generation order
/// never affects the values drawn.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static SplitMix64 stream(std::uint64_t seed, std::uint64_t index) {
    SplitMix64 g(seed ^ 0x6a09e667f3bcc909ULL);
    g.state_ += mix(index + 0x9e3779b97f4a7c15ULL);
    return g;
  }

  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  std::uint64_t operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  std::uint16_t next_word() { return static_cast<std::uint16_t>(operator()() >> 48); }

  /// Uniform in [0, 1).
  double next_unit() { return static_cast<double>(operator()() >> 11) * 0x1.0p-53; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace lwnd
