#pragma once

#include <cstdint>
#include <random>

namespace pda {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Counter-based sub-seed: depends only on (seed, stream, counter), so a
/// consumer can open substream k without touching substreams 0..k-1.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t counter = 0) noexcept {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ splitmix64(counter + 0x632BE59BD9B4E019ULL));
}

inline Rng make_substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
  return Rng(derive_seed(seed, stream, counter));
}

/// Stream tags so independent consumers of one user seed never collide.
namespace streams {
inline constexpr std::uint64_t roi = 1;
inline constexpr std::uint64_t patch_fit = 2;
inline constexpr std::uint64_t split = 3;
inline constexpr std::uint64_t augment = 4;
inline constexpr std::uint64_t synth = 5;
inline constexpr std::uint64_t train = 6;
}  // namespace streams

/// Uniform double in [0,1) from the top 53 bits; avoids the
/// implementation-defined std::uniform_real_distribution.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

}  // namespace pda
