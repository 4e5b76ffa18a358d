#pragma once

#include <cstdint>

namespace tabhash {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent child seed for (parent, stream). Used for per-sample, per-row
// and per-component seeds so every draw is addressable by counter.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
  return mix64(mix64(parent + kGolden) ^ mix64(stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
}

// The n-th output (n >= 0) of a SplitMix64 stream started at `state`.
constexpr std::uint64_t splitmix_at(std::uint64_t state, std::uint64_t n) noexcept {
  return mix64(state + (n + 1) * kGolden);
}

// Sequential SplitMix64 generator; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  constexpr result_type operator()() noexcept {
    state_ += kGolden;
    return mix64(state_);
  }

  // Uniform integer in [0, bound) (Lemire's multiply-shift with rejection).
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = (*this)();
      const unsigned __int128 prod = static_cast<unsigned __int128>(r) * bound;
      if (static_cast<std::uint64_t>(prod) >= threshold) return static_cast<std::uint64_t>(prod >> 64);
    }
  }

  // Uniform double in [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace tabhash
