#pragma once

// Seeded random sources and the child-seed scheme shared by every Monte
// Carlo estimator. A realization's generator depends only on (seed, index),
// so any partitioning of realizations across threads yields the same draws.

#include <cstdint>
#include <random>

namespace sosrec {

using Rng = std::mt19937_64;

/// Child seed for stream `index` under `seed` (two SplitMix64 rounds).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(seed) ^ (index * 0xd1b54a32d192ed03ULL + 0x2545f4914f6cdd1dULL));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline Rng make_child_rng(std::uint64_t seed, std::uint64_t index) {
  return Rng(derive_seed(seed, index));
}

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
/// Defined here rather than via std::uniform_real_distribution so the
/// mapping is identical across standard library implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace sosrec
