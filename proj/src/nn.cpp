#include "cvae/nn.hpp"

#include <cmath>
#include <random>

namespace cvae::nn {

std::string_view to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "softplus"; }

Activation activation_from_string(std::string_view name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "softplus") return Activation::Softplus;
    throw ContractError("unknown activation '" + std::string(name) + "'");
}

void MlpSpec::validate() const {
    if (sizes.size() < 2) throw ContractError("MlpSpec: need at least input and output sizes");
    for (auto s : sizes)
        if (s == 0) throw ContractError("MlpSpec: layer sizes must be positive");
}

std::string weight_name(std::string_view prefix, std::size_t layer) {
    return std::string(prefix) + ".W" + std::to_string(layer);
}

std::string bias_name(std::string_view prefix, std::size_t layer) {
    return std::string(prefix) + ".b" + std::to_string(layer);
}

ParameterSet mlp_init(const MlpSpec& spec, std::uint64_t seed, std::string_view prefix) {
    spec.validate();
    std::mt19937_64 rng(seed);
    ParameterSet params;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const std::size_t fan_in = spec.sizes[l];
        const std::size_t fan_out = spec.sizes[l + 1];
        std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
        Matrix w(fan_out, fan_in);
        for (double& x : w.data) x = normal(rng);
        params.set(weight_name(prefix, l), std::move(w));
        params.set(bias_name(prefix, l), Matrix(1, fan_out));
    }
    return params;
}

ad::Var mlp_apply(const MlpSpec& spec, std::string_view prefix, const ad::VarMap& params, ad::Var input) {
    spec.validate();
    if (input.cols() != spec.input_width())
        throw ContractError("mlp_apply(" + std::string(prefix) + "): input width " + std::to_string(input.cols()) +
                            " != " + std::to_string(spec.input_width()));
    ad::Var h = input;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const ad::Var w = ad::lookup(params, weight_name(prefix, l));
        const ad::Var b = ad::lookup(params, bias_name(prefix, l));
        h = ad::matmul_nt(h, w) + ad::broadcast(b, h.rows(), w.rows());
        if (l + 1 < spec.layer_count()) h = spec.hidden == Activation::Tanh ? ad::tanh(h) : ad::softplus(h);
    }
    return h;
}

Matrix mlp_apply(const MlpSpec& spec, std::string_view prefix, const ParameterSet& params, const Matrix& input) {
    ad::Tape tape;
    ad::VarMap vars;
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        for (const auto& name : {weight_name(prefix, l), bias_name(prefix, l)})
            vars.emplace(name, tape.constant(params.at(name)));
    }
    return mlp_apply(spec, prefix, vars, tape.constant(input)).value();
}

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw ContractError("Adam: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ContractError("Adam: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ContractError("Adam: eps must be positive");
}

AdamState AdamState::zeros_like(const ParameterSet& params) {
    return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(AdamState& state, ParameterSet& params, const ParameterSet& grads, const AdamConfig& cfg) {
    cfg.validate();
    if (!params.same_layout(grads) || !params.same_layout(state.first_moment))
        throw ContractError("adam_step: parameter, gradient and moment layouts differ");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : params) {
        const Matrix& g = grads.at(name);
        Matrix& m = state.first_moment.at(name);
        Matrix& v = state.second_moment.at(name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
            const double m_hat = m.data[i] / bc1;
            const double v_hat = v.data[i] / bc2;
            p.data[i] += cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace cvae::nn
