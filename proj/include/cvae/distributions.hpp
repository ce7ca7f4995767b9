#pragma once

// Log-densities and reparameterized sampling. The tape-level functions work
// on batches (one distribution per row) and return one value per row; the
// value-level overloads take a single distribution and return a number.

#include <span>
#include <vector>

#include "cvae/autodiff.hpp"
#include "cvae/matrix.hpp"

namespace cvae::dist {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

// Diagonal Gaussian; each row of mean/log_var is one distribution.
struct GaussianParams {
    Matrix mean;
    Matrix log_var;

    std::size_t width() const { return mean.cols; }
    void validate() const;
};

// Uniform-weight mixture. Every component has the same width and row count.
struct MixtureParams {
    std::vector<GaussianParams> components;

    std::size_t size() const { return components.size(); }
    void validate() const;
};

struct GaussianVar {
    ad::Var mean;
    ad::Var log_var;
};

// K components stacked component-major: rows [k·B, (k+1)·B) belong to
// component k for a batch of B rows.
struct MixtureVar {
    ad::Var mean;
    ad::Var log_var;
    std::size_t k = 1;

    std::size_t batch() const { return mean.rows() / k; }
};

MixtureVar stack_components(std::span<const GaussianVar> components);
GaussianVar component(const MixtureVar& m, std::size_t k);

ad::Var gaussian_log_prob(const GaussianVar& p, ad::Var z);
ad::Var gaussian_rsample(const GaussianVar& p, ad::Var noise);
ad::Var bernoulli_log_prob(ad::Var logits, ad::Var target);
ad::Var mixture_log_prob(const MixtureVar& m, ad::Var z);
ad::Var kl_diag_gaussians(const GaussianVar& q, const GaussianVar& p);

double gaussian_log_prob(const GaussianParams& p, std::span<const double> z);
std::vector<double> gaussian_rsample(const GaussianParams& p, std::span<const double> noise);
double bernoulli_log_prob(std::span<const double> logits, std::span<const double> target);
double mixture_log_prob(const MixtureParams& m, std::span<const double> z);
double kl_diag_gaussians(const GaussianParams& q, const GaussianParams& p);

// Throws ContractError unless every entry is exactly 0 or 1.
void require_binary(const Matrix& target);

}  // namespace cvae::dist
