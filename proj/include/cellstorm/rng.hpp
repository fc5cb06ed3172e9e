#pragma once

#include <cstdint>
#include <random>

namespace cellstorm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent random streams keyed by (seed, stream tag, counter). Every
/// per-frame draw in the pipeline goes through this so frames can be
/// produced in any order or in parallel with identical results.
enum class Stream : std::uint64_t {
    camera = 1,
    ground_truth = 2,
    codec = 3,
    dataset = 4,
    frc_split = 5,
    background = 6,
};

inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t counter = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ counter);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream, std::uint64_t counter = 0) {
    return std::mt19937_64(derive_seed(seed, stream, counter));
}

} // namespace cellstorm
