#include "pwabc/random_stream.hpp"

namespace pwabc {

namespace {

std::uint64_t mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
  z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
  return z ^ (z >> 33);
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) noexcept
    : state_(mix(mix(mix(seed ^ 0x6a09e667f3bcc908ULL) ^ stream) + 0x3c6ef372fe94f82bULL * (substream + 1))) {}

}  // namespace pwabc
