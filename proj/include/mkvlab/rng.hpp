#pragma once

#include <cstdint>
#include <limits>

namespace mkvlab {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream keyed by (seed, stream index). The n-th output is a
/// pure function of (seed, index, n), so any number of streams can be
/// advanced in any order without changing results.
class PathStream {
 public:
  using result_type = std::uint64_t;

  PathStream(std::uint64_t seed, std::uint64_t index) noexcept
      : key_(mix64(seed ^ mix64(index + 0x632be59bd9b4e019ULL))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mkvlab
