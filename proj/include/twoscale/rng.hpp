#pragma once

#include <cstdint>
#include <initializer_list>

namespace twoscale {

// Counter-based random streams. A stream is addressed by a 64-bit key that
// is derived by hashing a path of integers (seed, replicate, purpose, ...),
// and its n-th output is a pure function of (key, n). This is what makes
// Monte Carlo runs bit-identical regardless of thread scheduling.

/// 64-bit finalizer from SplitMix64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives a child key; distinct (parent, tag) pairs give unrelated keys.
constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t tag) noexcept {
  return mix64(parent ^ mix64(tag + 0x632BE59BD9B4E019ULL));
}

std::uint64_t derive_key(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept;

/// Substream purposes. Values are part of the reproducibility contract.
enum class StreamTag : std::uint64_t {
  brownian = 1,
  marks = 2,
  initial = 3,
  sampling = 4,
};

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(key), counter_(counter) {}

  std::uint64_t next_u64() noexcept { return mix64(key_ ^ mix64(counter_++)); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1].
  double uniform_open_low() noexcept { return 1.0 - uniform(); }

  /// Exponential with the given rate (> 0).
  double exponential(double rate) noexcept;

  /// Standard normal by the Box-Muller transform. Consumes exactly two
  /// uniforms per call so that counters stay aligned with draw indices.
  double normal() noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace twoscale
