#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace forumstrat {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(seed) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b) noexcept {
  return derive_seed(derive_seed(seed, a), b);
}

/// Seeded generator with platform-independent draws.
///
/// The engine (mt19937_64) has a standard-mandated output sequence; the
/// distribution helpers below are written out explicitly because the
/// standard library distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform real in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  /// Moves a uniformly drawn subset of size k to the front of v (partial
  /// Fisher-Yates); returns k clamped to v.size().
  template <typename T>
  std::size_t partial_shuffle(std::vector<T>& v, std::size_t k) {
    if (k > v.size()) k = v.size();
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(v[i], v[i + uniform_index(v.size() - i)]);
    }
    return k;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace forumstrat
