#pragma once

#include <cstdint>
#include <random>

namespace chainfit {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Independent stream for item `index` of a run seeded with `seed`. `salt`
/// separates uses (noise, conformations, restarts) within the same run.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) {
    std::uint64_t s = splitmix64(seed ^ splitmix64(index + 0x632BE59BD9B4E019ULL * (salt + 1)));
    return Rng(s);
}

}  // namespace chainfit
