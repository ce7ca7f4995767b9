#pragma once

#include <cstdint>
#include <random>

#include "cvae/matrix.hpp"

namespace cvae {

using Rng = std::mt19937_64;

// Counter-based split of one seed into independent streams (splitmix64 of
// seed + golden-ratio multiples of the stream index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Matrix standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (double& x : m.data) x = normal(rng);
    return m;
}

}  // namespace cvae
