#pragma once

#include <cstdint>
#include <limits>

namespace pwabc {

/// Counter-keyed random stream. A stream is identified by (seed, stream,
/// substream); ABC keys it by (seed, factor index, draw index), so the draws
/// a factor sees never depend on scheduling or batch size. Satisfies
/// UniformRandomBitGenerator for use with <random> distributions.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform on (0, 1), never exactly 0 or 1.
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

/// Well-known stream identifiers for non-factor consumers.
namespace streams {
inline constexpr std::uint64_t kDataset = 0xDA7A5E7ULL;
inline constexpr std::uint64_t kPosterior = 0x9057E7ULL;
inline constexpr std::uint64_t kEbc = 0xEBCULL;
}  // namespace streams

}  // namespace pwabc
