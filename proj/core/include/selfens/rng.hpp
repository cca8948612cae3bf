#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace selfens {

using Rng = std::mt19937_64;

/// Independent random streams derived from the single run seed. Each
/// stochastic consumer draws only from its own stream, so switching one
/// consumer off never shifts the draws seen by another.
enum class Stream : std::uint64_t {
  kInit = 1,
  kSplit = 2,
  kCorrupt = 3,
  kShuffle = 4,
  kAugment = 5,
  kDropout = 6,
  kData = 7,
  kReplicate = 8,
  kPool = 9,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed: derive_seed(s, {a, b}) == mix(mix(mix(s) ^ a) ^ b).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t p : path) h = mix64(h ^ p);
  return h;
}

constexpr std::uint64_t stream_seed(std::uint64_t seed, Stream stream) {
  return derive_seed(seed, {static_cast<std::uint64_t>(stream)});
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace selfens
