#pragma once

// Seed derivation and small portable sampling helpers, so that seeded streams
// do not depend on the standard library's distribution implementations.

#include <cstdint>
#include <random>

namespace margin_auditor {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent seed for (stream, counter) under a base seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ counter);
}

// Uniform on [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Uniform on {0, ..., bound - 1}.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

}  // namespace margin_auditor
