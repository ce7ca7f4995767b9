#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cvae/autodiff.hpp"
#include "cvae/parameters.hpp"

namespace cvae::nn {

enum class Activation { Tanh, Softplus };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

// Layer widths from input to output; hidden layers use `hidden`, the output
// layer is affine.
struct MlpSpec {
    std::vector<std::size_t> sizes;
    Activation hidden = Activation::Tanh;

    std::size_t input_width() const { return sizes.front(); }
    std::size_t output_width() const { return sizes.back(); }
    std::size_t layer_count() const { return sizes.size() - 1; }
    void validate() const;

    bool operator==(const MlpSpec&) const = default;
};

// Parameter names for layer i under `prefix`: "<prefix>.W<i>" (out×in) and
// "<prefix>.b<i>" (1×out).
std::string weight_name(std::string_view prefix, std::size_t layer);
std::string bias_name(std::string_view prefix, std::size_t layer);

// Weights ~ N(0, 1/fan_in), biases zero.
ParameterSet mlp_init(const MlpSpec& spec, std::uint64_t seed, std::string_view prefix = "mlp");

// Applies the network to a batch (one row per item).
ad::Var mlp_apply(const MlpSpec& spec, std::string_view prefix, const ad::VarMap& params, ad::Var input);
Matrix mlp_apply(const MlpSpec& spec, std::string_view prefix, const ParameterSet& params, const Matrix& input);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

struct AdamState {
    ParameterSet first_moment;
    ParameterSet second_moment;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ParameterSet& params);
};

// One bias-corrected Adam step of gradient ASCENT: parameters move along
// +grads.
void adam_step(AdamState& state, ParameterSet& params, const ParameterSet& grads, const AdamConfig& cfg);

}  // namespace cvae::nn
