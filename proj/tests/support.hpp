#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "cvae/autodiff.hpp"
#include "cvae/random.hpp"

namespace testing {

inline cvae::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
    cvae::Rng rng(seed);
    cvae::Matrix m = cvae::standard_normal(rows, cols, rng);
    for (double& v : m.data) v *= scale;
    return m;
}

inline cvae::Matrix uniform_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo, double hi) {
    cvae::Rng rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    cvae::Matrix m(rows, cols);
    for (double& v : m.data) v = u(rng);
    return m;
}

// Scalar probe of a matrix-valued expression: sum(w ⊙ v) with fixed random
// weights, so every output entry contributes a distinct amount.
inline cvae::ad::Var probe(cvae::ad::Var v, std::uint64_t seed = 99) {
    auto w = v.tape().constant(random_matrix(v.rows(), v.cols(), seed));
    return cvae::ad::sum(cvae::ad::mul(v, w));
}

inline double max_abs_diff(const cvae::Matrix& a, const cvae::Matrix& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) d = std::max(d, std::abs(a.data[i] - b.data[i]));
    return d;
}

}  // namespace testing
