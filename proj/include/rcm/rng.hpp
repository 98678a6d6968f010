#pragma once

// Counter-based randomness. Every random number used by the dynamics is a
// pure function of (seed, replica, edge, ordinal, slot), so a schedule can
// be regenerated or extended to a longer horizon without drawing anything
// twice and without any shared generator state.

#include <cmath>
#include <cstdint>
#include <limits>

namespace rcm {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Identifies one independent family of random streams.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t replica = 0;

  friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Stream tags keep different uses of the same (edge, ordinal) apart.
enum class Slot : std::uint64_t { ArrivalGap = 1, Uniform = 2, Aux = 3 };

inline constexpr std::uint64_t counter_hash(StreamKey key, std::uint64_t edge,
                                            std::uint64_t ordinal,
                                            Slot slot) noexcept {
  std::uint64_t h = splitmix64(key.seed ^ 0x5851f42d4c957f2dULL);
  h = splitmix64(h ^ key.replica);
  h = splitmix64(h ^ (edge * 0x2545f4914f6cdd1dULL));
  h = splitmix64(h ^ ordinal);
  return splitmix64(h ^ static_cast<std::uint64_t>(slot));
}

/// Uniform on the open interval (0, 1) from the top 53 bits.
inline constexpr double to_unit_open(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double counter_uniform(StreamKey key, std::uint64_t edge,
                              std::uint64_t ordinal, Slot slot) noexcept {
  return to_unit_open(counter_hash(key, edge, ordinal, slot));
}

inline double counter_exponential(StreamKey key, std::uint64_t edge,
                                  std::uint64_t ordinal) noexcept {
  return -std::log(counter_uniform(key, edge, ordinal, Slot::ArrivalGap));
}

/// Small sequential generator (splitmix64 state machine), satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }
  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() noexcept { return to_unit_open((*this)()); }

 private:
  std::uint64_t state_;
};

}  // namespace rcm
