#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace inactivity {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Folds a sequence of integers into one stream key. Order matters.
constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> parts) noexcept {
  std::uint64_t key = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t part : parts) key = mix64(key ^ mix64(part));
  return key;
}

/// Counter-based generator: draw k of the stream with key K is a pure function
/// of (K, k), so a replicate keyed by (seed, b) is reproducible no matter which
/// thread computes it or in what order.
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  explicit constexpr KeyedStream(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    return mix64(key_ ^ mix64(counter_++ * 0xD1B54A32D192ED03ULL));
  }

  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unit exponential by inversion.
  double exponential() noexcept { return -std::log(uniform()); }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t position() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace inactivity
