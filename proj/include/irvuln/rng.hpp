#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace irvuln {

/// SplitMix64 (Steele, Lea, Flood 2014). All sampling in the library goes
/// through this generator and the helpers below so that results do not depend
/// on the standard library's distribution implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Independent child generator; advances this one by a single draw.
  SplitMix64 split() { return SplitMix64(next() ^ 0x6a09e667f3bcc909ULL); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t draw = next();
    while (draw >= limit) draw = next();
    return draw % bound;
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates shuffle, walking from the back.
template <typename T>
void shuffle(std::span<T> items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Moves a uniform sample of `count` elements (without replacement) to the
/// front of `items`, in draw order.
template <typename T>
void partial_shuffle(std::span<T> items, std::size_t count, SplitMix64& rng) {
  for (std::size_t i = 0; i < count && i < items.size(); ++i) {
    const std::size_t j = i + rng.below(items.size() - i);
    std::swap(items[i], items[j]);
  }
}

}  // namespace irvuln
