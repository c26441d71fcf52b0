#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace robust_enkf {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based random stream keyed by (seed, stream, substream).
///
/// Two streams with the same key produce the same sequence no matter which
/// thread draws from them, which is what makes per-particle and per-trial
/// parallelism reproducible. The generator is SplitMix64 started at a key
/// hashed from the three identifiers.
class StreamRng {
 public:
  using result_type = std::uint64_t;

  explicit StreamRng(std::uint64_t seed, std::uint64_t stream = 0,
                     std::uint64_t substream = 0)
      : state_(key(seed, stream, substream)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    state_ += detail::kGolden;
    return detail::splitmix_finalize(state_);
  }

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(*this);
  }

  double normal() { return normal_(*this); }

 private:
  static std::uint64_t key(std::uint64_t seed, std::uint64_t stream,
                           std::uint64_t substream) {
    std::uint64_t k = detail::splitmix_finalize(seed + detail::kGolden);
    k = detail::splitmix_finalize(k ^ (stream + 2 * detail::kGolden));
    k = detail::splitmix_finalize(k ^ (substream + 3 * detail::kGolden));
    return k;
  }

  std::uint64_t state_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace robust_enkf
