#include "cvae/model.hpp"

#include <cmath>
#include <random>

#include "cvae/random.hpp"

namespace cvae {

namespace {

using dist::GaussianVar;
using dist::MixtureVar;

nn::MlpSpec make_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                      nn::Activation act) {
    nn::MlpSpec spec;
    spec.sizes.push_back(in);
    spec.sizes.insert(spec.sizes.end(), hidden.begin(), hidden.end());
    spec.sizes.push_back(out);
    spec.hidden = act;
    return spec;
}

// Parameters as tape constants (value-level evaluation, no gradients).
ad::VarMap constants(ad::Tape& tape, const ParameterSet& params) {
    ad::VarMap vars;
    for (const auto& [name, value] : params) vars.emplace(name, tape.constant(value));
    return vars;
}

ad::Var clamp_log_var(ad::Var v) { return ad::clamp(v, dist::kLogVarMin, dist::kLogVarMax); }

// Mean over S draw blocks of a (S·B)×1 column.
ad::Var average_draws(ad::Var v, std::size_t samples) {
    if (samples == 1) return v;
    const std::size_t b = v.rows() / samples;
    ad::Var acc = ad::slice_rows(v, 0, b);
    for (std::size_t s = 1; s < samples; ++s) acc = acc + ad::slice_rows(v, s * b, b);
    return ad::scale(acc, 1.0 / static_cast<double>(samples));
}

// Repeats each component block S times so the mixture lines up with S·B draws.
MixtureVar tile_mixture(const MixtureVar& m, std::size_t samples) {
    if (samples == 1) return m;
    std::vector<GaussianVar> parts;
    for (std::size_t k = 0; k < m.k; ++k) {
        const GaussianVar c = dist::component(m, k);
        parts.push_back({ad::tile_rows(c.mean, samples), ad::tile_rows(c.log_var, samples)});
    }
    return dist::stack_components(parts);
}

void require_rows(const Matrix& a, std::size_t width, const char* what) {
    if (a.cols != width)
        throw ContractError(std::string(what) + ": expected width " + std::to_string(width) + ", got " +
                            std::to_string(a.cols));
}

}  // namespace

std::string_view to_string(PriorKind k) {
    switch (k) {
        case PriorKind::ConditionalGaussian: return "gaussian";
        case PriorKind::Cmog: return "cmog";
        case PriorKind::Cvamp: return "cvamp";
        case PriorKind::Cdv: return "cdv";
    }
    return "?";
}

std::string_view to_string(Likelihood l) { return l == Likelihood::Gaussian ? "gaussian" : "bernoulli"; }

std::string_view to_string(DecoderConditioning c) {
    return c == DecoderConditioning::LatentOnly ? "latent-only" : "latent-and-condition";
}

std::string_view to_string(KlEstimator k) { return k == KlEstimator::MonteCarlo ? "monte-carlo" : "analytic"; }

PriorKind prior_kind_from_string(std::string_view s) {
    if (s == "gaussian" || s == "conditional-gaussian") return PriorKind::ConditionalGaussian;
    if (s == "cmog") return PriorKind::Cmog;
    if (s == "cvamp") return PriorKind::Cvamp;
    if (s == "cdv") return PriorKind::Cdv;
    throw ContractError("unknown prior kind '" + std::string(s) + "' (gaussian, cmog, cvamp, cdv)");
}

Likelihood likelihood_from_string(std::string_view s) {
    if (s == "gaussian") return Likelihood::Gaussian;
    if (s == "bernoulli") return Likelihood::Bernoulli;
    throw ContractError("unknown likelihood '" + std::string(s) + "' (gaussian, bernoulli)");
}

DecoderConditioning decoder_conditioning_from_string(std::string_view s) {
    if (s == "latent-only") return DecoderConditioning::LatentOnly;
    if (s == "latent-and-condition") return DecoderConditioning::LatentAndCondition;
    throw ContractError("unknown decoder conditioning '" + std::string(s) +
                        "' (latent-only, latent-and-condition)");
}

KlEstimator kl_estimator_from_string(std::string_view s) {
    if (s == "monte-carlo") return KlEstimator::MonteCarlo;
    if (s == "analytic") return KlEstimator::Analytic;
    throw ContractError("unknown kl estimator '" + std::string(s) + "' (monte-carlo, analytic)");
}

void ModelConfig::validate() const {
    if (condition_dim == 0 || target_dim == 0 || latent_dim == 0)
        throw ContractError("ModelConfig: dimensions must be positive");
    if (k == 0) throw ContractError("ModelConfig: K must be positive");
    for (auto h : hidden)
        if (h == 0) throw ContractError("ModelConfig: hidden sizes must be positive");
    if (kl == KlEstimator::Analytic && prior != PriorKind::ConditionalGaussian)
        throw ContractError("ModelConfig: analytic KL requires the conditional Gaussian prior");
    if (!(decoder_log_var_init >= dist::kLogVarMin && decoder_log_var_init <= dist::kLogVarMax))
        throw ContractError("ModelConfig: decoder_log_var_init must lie in [-10, 10]");
}

ClvmModel ClvmModel::skeleton(const ModelConfig& cfg) {
    cfg.validate();
    ClvmModel m;
    m.config = cfg;
    const std::size_t nz = cfg.latent_dim;
    const std::size_t dec_in = nz + (cfg.decoder == DecoderConditioning::LatentAndCondition ? cfg.condition_dim : 0);
    m.encoder = make_spec(cfg.condition_dim + cfg.target_dim, cfg.hidden, 2 * nz, cfg.activation);
    m.decoder = make_spec(dec_in, cfg.hidden, cfg.target_dim, cfg.activation);
    m.prior.kind = cfg.prior;
    m.prior.k = cfg.components();
    switch (cfg.prior) {
        case PriorKind::ConditionalGaussian:
            m.prior.network = make_spec(cfg.condition_dim, cfg.hidden, 2 * nz, cfg.activation);
            break;
        case PriorKind::Cmog:
            m.prior.network = make_spec(cfg.condition_dim, cfg.hidden, 2 * cfg.k * nz, cfg.activation);
            break;
        case PriorKind::Cvamp: break;
        case PriorKind::Cdv:
            m.prior.network = make_spec(cfg.condition_dim, cfg.hidden, cfg.k * nz, cfg.activation);
            break;
    }
    return m;
}

ClvmModel ClvmModel::create(const ModelConfig& cfg, std::uint64_t seed, const Matrix& init_targets) {
    ClvmModel m = skeleton(cfg);
    m.params.merge(nn::mlp_init(m.encoder, mix_seed(seed, 1), kEncoder));
    m.params.merge(nn::mlp_init(m.decoder, mix_seed(seed, 2), kDecoder));
    if (cfg.likelihood == Likelihood::Gaussian) m.params.set(std::string(kDecoderLogVar), Matrix(1, cfg.target_dim, cfg.decoder_log_var_init));
    if (m.prior.has_network()) m.params.merge(nn::mlp_init(m.prior.network, mix_seed(seed, 3), kPrior));

    if (cfg.prior == PriorKind::Cdv) {
        // Small pseudo latents at the start keep every component near the
        // bulk of the posterior.
        Matrix& w = m.params.at(nn::weight_name(kPrior, m.prior.network.layer_count() - 1));
        for (double& x : w.data) x *= 0.01;
    }
    if (cfg.prior == PriorKind::Cvamp) {
        Rng rng(mix_seed(seed, 4));
        Matrix pseudo(cfg.k, cfg.target_dim);
        if (!init_targets.empty()) {
            require_rows(init_targets, cfg.target_dim, "ClvmModel::create init_targets");
            std::uniform_int_distribution<std::size_t> pick(0, init_targets.rows - 1);
            for (std::size_t k = 0; k < cfg.k; ++k) {
                auto src = init_targets.row(pick(rng));
                std::copy(src.begin(), src.end(), pseudo.row(k).begin());
            }
        } else {
            pseudo = standard_normal(cfg.k, cfg.target_dim, rng);
        }
        m.params.set(std::string(kPseudoTargets), std::move(pseudo));
    }
    return m;
}

std::size_t ClvmModel::prior_head_width() const {
    const std::size_t nz = config.latent_dim;
    switch (config.prior) {
        case PriorKind::ConditionalGaussian: return 2 * nz;
        case PriorKind::Cmog: return 2 * config.k * nz;
        case PriorKind::Cvamp: return config.k * config.target_dim;
        case PriorKind::Cdv: return config.k * nz;
    }
    return 0;
}

// ---------------------------------------------------------------------------

GaussianVar encode(const ClvmModel& m, const ad::VarMap& p, ad::Var x, ad::Var y) {
    if (x.cols() != m.config.condition_dim || y.cols() != m.config.target_dim)
        throw ContractError("encode: condition/target widths do not match the model");
    const ad::Var out = nn::mlp_apply(m.encoder, kEncoder, p, ad::concat_cols({x, y}));
    const std::size_t nz = m.config.latent_dim;
    return {ad::slice_cols(out, 0, nz), clamp_log_var(ad::slice_cols(out, nz, nz))};
}

ad::Var decode(const ClvmModel& m, const ad::VarMap& p, ad::Var z, ad::Var x) {
    if (z.cols() != m.config.latent_dim) throw ContractError("decode: latent width does not match the model");
    if (m.config.decoder == DecoderConditioning::LatentOnly) return nn::mlp_apply(m.decoder, kDecoder, p, z);
    if (x.cols() != m.config.condition_dim) throw ContractError("decode: condition width does not match the model");
    return nn::mlp_apply(m.decoder, kDecoder, p, ad::concat_cols({z, x}));
}

ad::Var decoder_mean(const ClvmModel& m, const ad::VarMap& p, ad::Var z, ad::Var x) {
    const ad::Var out = decode(m, p, z, x);
    return m.config.likelihood == Likelihood::Bernoulli ? ad::sigmoid(out) : out;
}

ad::Var log_likelihood(const ClvmModel& m, const ad::VarMap& p, ad::Var decoded, ad::Var y) {
    if (m.config.likelihood == Likelihood::Bernoulli) return dist::bernoulli_log_prob(decoded, y);
    const ad::Var log_var = ad::broadcast(clamp_log_var(ad::lookup(p, kDecoderLogVar)), y.rows(), y.cols());
    return dist::gaussian_log_prob({decoded, log_var}, y);
}

MixtureVar prior_components(const ClvmModel& m, const ad::VarMap& p, ad::Var x) {
    if (x.cols() != m.config.condition_dim)
        throw ContractError("prior_components: condition width does not match the model");
    const std::size_t nz = m.config.latent_dim;
    const std::size_t k = m.config.k;
    const std::size_t b = x.rows();
    switch (m.config.prior) {
        case PriorKind::ConditionalGaussian: {
            const ad::Var out = nn::mlp_apply(m.prior.network, kPrior, p, x);
            return {ad::slice_cols(out, 0, nz), clamp_log_var(ad::slice_cols(out, nz, nz)), 1};
        }
        case PriorKind::Cmog: {
            // Heads: K means first, then K log variances.
            const ad::Var out = nn::mlp_apply(m.prior.network, kPrior, p, x);
            std::vector<GaussianVar> parts;
            for (std::size_t c = 0; c < k; ++c)
                parts.push_back({ad::slice_cols(out, c * nz, nz), clamp_log_var(ad::slice_cols(out, (k + c) * nz, nz))});
            return dist::stack_components(parts);
        }
        case PriorKind::Cvamp: {
            const ad::Var pseudo = ad::lookup(p, kPseudoTargets);
            std::vector<ad::Var> targets;
            for (std::size_t c = 0; c < k; ++c)
                targets.push_back(ad::broadcast(ad::slice_rows(pseudo, c, 1), b, m.config.target_dim));
            const GaussianVar q = encode(m, p, ad::tile_rows(x, k), ad::concat_rows(targets));
            return {q.mean, q.log_var, k};
        }
        case PriorKind::Cdv: {
            const ad::Var pseudo = nn::mlp_apply(m.prior.network, kPrior, p, x);  // B × K·N_z
            std::vector<ad::Var> latents;
            for (std::size_t c = 0; c < k; ++c) latents.push_back(ad::slice_cols(pseudo, c * nz, nz));
            const ad::Var x_tiled = ad::tile_rows(x, k);
            const ad::Var decoded = decoder_mean(m, p, ad::concat_rows(latents), x_tiled);
            const GaussianVar q = encode(m, p, x_tiled, decoded);
            return {q.mean, q.log_var, k};
        }
    }
    throw ContractError("prior_components: unknown prior kind");
}

ElboTerms elbo(const ClvmModel& m, const ad::VarMap& p, ad::Var x, ad::Var y, ad::Var noise, std::size_t samples,
               double beta) {
    if (samples == 0) throw ContractError("elbo: need at least one draw");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ContractError("elbo: beta must lie in [0, 1]");
    const std::size_t b = x.rows();
    if (y.rows() != b || noise.rows() != samples * b || noise.cols() != m.config.latent_dim)
        throw ContractError("elbo: batch/noise shapes are inconsistent");

    const GaussianVar q = encode(m, p, x, y);
    const GaussianVar q_tiled =
        samples == 1 ? q : GaussianVar{ad::tile_rows(q.mean, samples), ad::tile_rows(q.log_var, samples)};
    const ad::Var x_tiled = samples == 1 ? x : ad::tile_rows(x, samples);
    const ad::Var y_tiled = samples == 1 ? y : ad::tile_rows(y, samples);
    const ad::Var z = dist::gaussian_rsample(q_tiled, noise);

    const ad::Var reconstruction = average_draws(log_likelihood(m, p, decode(m, p, z, x_tiled), y_tiled), samples);

    const MixtureVar prior = prior_components(m, p, x);
    ad::Var prior_minus_posterior;
    if (m.config.kl == KlEstimator::Analytic) {
        prior_minus_posterior = ad::scale(dist::kl_diag_gaussians(q, {prior.mean, prior.log_var}), -1.0);
    } else {
        const ad::Var log_prior = dist::mixture_log_prob(tile_mixture(prior, samples), z);
        const ad::Var log_posterior = dist::gaussian_log_prob(q_tiled, z);
        prior_minus_posterior = average_draws(log_prior - log_posterior, samples);
    }
    prior_minus_posterior = ad::scale(prior_minus_posterior, beta);
    return {reconstruction, prior_minus_posterior, reconstruction + prior_minus_posterior};
}

// ---------------------------------------------------------------------------

dist::GaussianParams encode(const ClvmModel& m, const Matrix& x, const Matrix& y) {
    ad::Tape tape;
    const auto vars = constants(tape, m.params);
    const GaussianVar q = encode(m, vars, tape.constant(x), tape.constant(y));
    return {q.mean.value(), q.log_var.value()};
}

Matrix decode(const ClvmModel& m, const Matrix& z, const Matrix& x) {
    ad::Tape tape;
    const auto vars = constants(tape, m.params);
    return decode(m, vars, tape.constant(z), tape.constant(x)).value();
}

Matrix decoder_mean(const ClvmModel& m, const Matrix& z, const Matrix& x) {
    ad::Tape tape;
    const auto vars = constants(tape, m.params);
    return decoder_mean(m, vars, tape.constant(z), tape.constant(x)).value();
}

dist::MixtureParams prior_components(const ClvmModel& m, const Matrix& x) {
    if (x.rows != 1) throw ContractError("prior_components: expects a single condition row");
    ad::Tape tape;
    const auto vars = constants(tape, m.params);
    const MixtureVar mix = prior_components(m, vars, tape.constant(x));
    dist::MixtureParams out;
    for (std::size_t k = 0; k < mix.k; ++k)
        out.components.push_back({take_rows(mix.mean.value(), k, 1), take_rows(mix.log_var.value(), k, 1)});
    return out;
}

ElboEstimate elbo(const ClvmModel& m, const Matrix& x, const Matrix& y, const Matrix& noise, std::size_t samples,
                  double beta) {
    ad::Tape tape;
    const auto vars = constants(tape, m.params);
    const ElboTerms terms = elbo(m, vars, tape.constant(x), tape.constant(y), tape.constant(noise), samples, beta);
    ElboEstimate e;
    const double n = static_cast<double>(x.rows);
    for (double v : terms.reconstruction.value().data) e.reconstruction += v;
    for (double v : terms.prior_minus_posterior.value().data) e.prior_minus_posterior += v;
    e.reconstruction /= n;
    e.prior_minus_posterior /= n;
    e.total = e.reconstruction + e.prior_minus_posterior;
    if (!std::isfinite(e.total))
        throw NumericalError("elbo: non-finite estimate (reconstruction " + std::to_string(e.reconstruction) +
                                 ", prior-minus-posterior " + std::to_string(e.prior_minus_posterior) + ")",
                             0, "elbo");
    return e;
}

ElboEstimate estimate_elbo(const ClvmModel& m, const data::DatasetSplit& ds, std::size_t samples,
                           std::uint64_t seed, std::size_t chunk) {
    if (samples == 0) throw ContractError("estimate_elbo: need at least one draw");
    if (ds.size() == 0) throw ContractError("estimate_elbo: empty dataset");
    if (chunk == 0) chunk = 1;
    Rng rng(seed);
    const std::size_t nz = m.config.latent_dim;
    double recon_sum = 0.0, pmp_sum = 0.0;
    for (std::size_t begin = 0; begin < ds.size(); begin += chunk) {
        const std::size_t b = std::min(chunk, ds.size() - begin);
        // Draws come datum by datum; lay them out draw-major for elbo().
        const Matrix per_datum = standard_normal(b * samples, nz, rng);
        Matrix noise(samples * b, nz);
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t s = 0; s < samples; ++s) {
                auto src = per_datum.row(i * samples + s);
                std::copy(src.begin(), src.end(), noise.row(s * b + i).begin());
            }
        ad::Tape tape;
        const auto vars = constants(tape, m.params);
        const ElboTerms terms = elbo(m, vars, tape.constant(take_rows(ds.conditions, begin, b)),
                                     tape.constant(take_rows(ds.targets, begin, b)), tape.constant(noise), samples, 1.0);
        for (double v : terms.reconstruction.value().data) recon_sum += v;
        for (double v : terms.prior_minus_posterior.value().data) pmp_sum += v;
    }
    ElboEstimate e;
    e.reconstruction = recon_sum / static_cast<double>(ds.size());
    e.prior_minus_posterior = pmp_sum / static_cast<double>(ds.size());
    e.total = e.reconstruction + e.prior_minus_posterior;
    return e;
}

}  // namespace cvae
