#pragma once

#include <cstdint>
#include <random>

namespace feed {

using Rng = std::mt19937_64;

// splitmix64 finalizer; mixes a base seed with a stream tag so that
// independent consumers (init, shuffle, augmentation, ...) never share a stream.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kShuffle = 2;
inline constexpr std::uint64_t kAugment = 3;
inline constexpr std::uint64_t kAuxiliary = 4;
inline constexpr std::uint64_t kData = 5;
}  // namespace stream

}  // namespace feed
