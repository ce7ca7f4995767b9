#include "cvae/distributions.hpp"

#include <cmath>

namespace cvae::dist {

namespace {

void require_width(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw ContractError(std::string(what) + ": width mismatch (" + std::to_string(a) + " vs " +
                            std::to_string(b) + ")");
}

void require_single_row(const GaussianParams& p, const char* what) {
    p.validate();
    if (p.mean.rows != 1) throw ContractError(std::string(what) + ": expects a single distribution");
}

GaussianVar on_tape(ad::Tape& tape, const GaussianParams& p) {
    return {tape.constant(p.mean), tape.constant(p.log_var)};
}

}  // namespace

void GaussianParams::validate() const {
    if (!mean.same_shape(log_var)) throw ContractError("GaussianParams: mean and log variance shapes differ");
}

void MixtureParams::validate() const {
    if (components.empty()) throw ContractError("MixtureParams: need at least one component");
    for (const auto& c : components) {
        c.validate();
        if (!c.mean.same_shape(components.front().mean))
            throw ContractError("MixtureParams: components differ in shape");
    }
}

MixtureVar stack_components(std::span<const GaussianVar> components) {
    if (components.empty()) throw ContractError("stack_components: need at least one component");
    std::vector<ad::Var> means, log_vars;
    for (const auto& c : components) {
        means.push_back(c.mean);
        log_vars.push_back(c.log_var);
    }
    return {ad::concat_rows(means), ad::concat_rows(log_vars), components.size()};
}

GaussianVar component(const MixtureVar& m, std::size_t k) {
    if (k >= m.k) throw ContractError("component: index out of range");
    const std::size_t b = m.batch();
    return {ad::slice_rows(m.mean, k * b, b), ad::slice_rows(m.log_var, k * b, b)};
}

ad::Var gaussian_log_prob(const GaussianVar& p, ad::Var z) {
    require_width(p.mean.cols(), z.cols(), "gaussian_log_prob");
    if (p.mean.rows() != z.rows()) throw ContractError("gaussian_log_prob: batch sizes differ");
    const ad::Var diff = z - p.mean;
    const ad::Var precision = ad::exp(ad::scale(p.log_var, -1.0));
    // -1/2 log 2pi - 1/2 logvar - (z - mean)^2 / (2 var), summed over the row
    const ad::Var terms = ad::add_scalar(ad::scale(p.log_var + diff * diff * precision, -0.5), -kHalfLog2Pi);
    return ad::sum_cols(terms);
}

ad::Var gaussian_rsample(const GaussianVar& p, ad::Var noise) {
    require_width(p.mean.cols(), noise.cols(), "gaussian_rsample");
    return p.mean + ad::exp(ad::scale(p.log_var, 0.5)) * noise;
}

ad::Var bernoulli_log_prob(ad::Var logits, ad::Var target) {
    require_width(logits.cols(), target.cols(), "bernoulli_log_prob");
    require_binary(target.value());
    // t log s(l) + (1 - t) log(1 - s(l)) = t l - log(1 + e^l)
    return ad::sum_cols(target * logits - ad::softplus(logits));
}

ad::Var mixture_log_prob(const MixtureVar& m, ad::Var z) {
    if (m.k == 0) throw ContractError("mixture_log_prob: mixture has no components");
    const std::size_t b = z.rows();
    if (m.mean.rows() != m.k * b) throw ContractError("mixture_log_prob: component batch does not match z");
    const ad::Var per_component = gaussian_log_prob({m.mean, m.log_var}, ad::tile_rows(z, m.k));
    if (m.k == 1) return per_component;
    std::vector<ad::Var> columns;
    columns.reserve(m.k);
    for (std::size_t k = 0; k < m.k; ++k) columns.push_back(ad::slice_rows(per_component, k * b, b));
    return ad::add_scalar(ad::logsumexp_rows(ad::concat_cols(columns)), -std::log(static_cast<double>(m.k)));
}

ad::Var kl_diag_gaussians(const GaussianVar& q, const GaussianVar& p) {
    require_width(q.mean.cols(), p.mean.cols(), "kl_diag_gaussians");
    const ad::Var diff = q.mean - p.mean;
    const ad::Var inv_var_p = ad::exp(ad::scale(p.log_var, -1.0));
    const ad::Var ratio = (ad::exp(q.log_var) + diff * diff) * inv_var_p;
    return ad::sum_cols(ad::scale(ad::add_scalar(p.log_var - q.log_var + ratio, -1.0), 0.5));
}

void require_binary(const Matrix& target) {
    for (double t : target.data)
        if (t != 0.0 && t != 1.0) throw ContractError("bernoulli target entries must be 0 or 1");
}

double gaussian_log_prob(const GaussianParams& p, std::span<const double> z) {
    require_single_row(p, "gaussian_log_prob");
    require_width(p.width(), z.size(), "gaussian_log_prob");
    ad::Tape tape;
    return gaussian_log_prob(on_tape(tape, p), tape.constant(Matrix::row_vector(z))).value().data[0];
}

std::vector<double> gaussian_rsample(const GaussianParams& p, std::span<const double> noise) {
    require_single_row(p, "gaussian_rsample");
    require_width(p.width(), noise.size(), "gaussian_rsample");
    ad::Tape tape;
    return gaussian_rsample(on_tape(tape, p), tape.constant(Matrix::row_vector(noise))).value().data;
}

double bernoulli_log_prob(std::span<const double> logits, std::span<const double> target) {
    ad::Tape tape;
    return bernoulli_log_prob(tape.constant(Matrix::row_vector(logits)), tape.constant(Matrix::row_vector(target)))
        .value()
        .data[0];
}

double mixture_log_prob(const MixtureParams& m, std::span<const double> z) {
    if (m.components.empty()) throw ContractError("mixture_log_prob: mixture has no components");
    m.validate();
    if (m.components.front().mean.rows != 1) throw ContractError("mixture_log_prob: expects single-row components");
    require_width(m.components.front().width(), z.size(), "mixture_log_prob");
    ad::Tape tape;
    std::vector<GaussianVar> parts;
    for (const auto& c : m.components) parts.push_back(on_tape(tape, c));
    return mixture_log_prob(stack_components(parts), tape.constant(Matrix::row_vector(z))).value().data[0];
}

double kl_diag_gaussians(const GaussianParams& q, const GaussianParams& p) {
    require_single_row(q, "kl_diag_gaussians");
    require_single_row(p, "kl_diag_gaussians");
    require_width(q.width(), p.width(), "kl_diag_gaussians");
    ad::Tape tape;
    return kl_diag_gaussians(on_tape(tape, q), on_tape(tape, p)).value().data[0];
}

}  // namespace cvae::dist
