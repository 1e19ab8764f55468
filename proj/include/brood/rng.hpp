#pragma once

#include <cstdint>
#include <random>

namespace brood {

using Rng = std::mt19937_64;

/// One step of the splitmix64 sequence.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Independent stream for chain `index` derived from one master seed.
inline Rng stream_rng(std::uint64_t master, std::uint64_t index) {
  return Rng(splitmix64(master ^ splitmix64(index + 1)));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

}  // namespace brood
