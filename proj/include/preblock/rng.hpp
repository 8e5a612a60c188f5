#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace preblock {

// Portable PRNG shared by every randomized routine in the library.
//
// A generator is splitmix64 whose initial state is (seed XOR stream_id).
// Stream ids carry a 32-bit tag in the high half and a per-use index in the
// low half, so the split shuffle for quartile 2 and bootstrap resample 2 never
// share a sequence:
//
//   split quartile q    0x53504C54'00000000 | q   ("SPLT")
//   bootstrap resample  0x424F4F54'00000000 | b   ("BOOT")
//   weight init         0x494E4954'00000000       ("INIT")
//   fixture data        0x46495854'00000000 | i   ("FIXT")
//
// Everything below is integer arithmetic, so sequences are bit-identical on
// every platform and in any language that reimplements the same steps.
namespace stream {
inline constexpr std::uint64_t split = 0x53504C5400000000ULL;
inline constexpr std::uint64_t bootstrap = 0x424F4F5400000000ULL;
inline constexpr std::uint64_t init = 0x494E495400000000ULL;
inline constexpr std::uint64_t fixture = 0x4649585400000000ULL;
} // namespace stream

class SplitMix64 {
public:
  explicit constexpr SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  constexpr SplitMix64(std::uint64_t seed, std::uint64_t stream_id) noexcept
      : state_(seed ^ stream_id) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  /// bound must be positive.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    // Reject the top (2^64 mod bound) values.
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold)
        return r % bound;
    }
  }

  std::uint64_t state() const noexcept { return state_; }

private:
  std::uint64_t state_;
};

/// Fisher-Yates, descending: for i = n-1 .. 1 swap(v[i], v[below(i+1)]).
template <typename T> void shuffle(std::span<T> items, SplitMix64 &rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

} // namespace preblock
