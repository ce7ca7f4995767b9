#pragma once

// Conditional latent-variable model p(y|x) = ∫ p(y|z[,x]) p(z|x) dz with an
// amortised Gaussian posterior q(z|x,y) and a pluggable prior.

#include <cstdint>
#include <string_view>
#include <vector>

#include "cvae/autodiff.hpp"
#include "cvae/data.hpp"
#include "cvae/distributions.hpp"
#include "cvae/nn.hpp"

namespace cvae {

enum class PriorKind { ConditionalGaussian, Cmog, Cvamp, Cdv };
enum class Likelihood { Gaussian, Bernoulli };
enum class DecoderConditioning { LatentOnly, LatentAndCondition };
// How the prior-minus-posterior term is estimated. Analytic needs a
// single-Gaussian prior.
enum class KlEstimator { MonteCarlo, Analytic };

std::string_view to_string(PriorKind k);
std::string_view to_string(Likelihood l);
std::string_view to_string(DecoderConditioning c);
std::string_view to_string(KlEstimator k);
PriorKind prior_kind_from_string(std::string_view s);
Likelihood likelihood_from_string(std::string_view s);
DecoderConditioning decoder_conditioning_from_string(std::string_view s);
KlEstimator kl_estimator_from_string(std::string_view s);

struct ModelConfig {
    std::size_t condition_dim = 1;
    std::size_t target_dim = 1;
    std::size_t latent_dim = 2;
    PriorKind prior = PriorKind::Cdv;
    std::size_t k = 8;
    std::vector<std::size_t> hidden = {64, 64};
    nn::Activation activation = nn::Activation::Tanh;
    Likelihood likelihood = Likelihood::Gaussian;
    DecoderConditioning decoder = DecoderConditioning::LatentOnly;
    KlEstimator kl = KlEstimator::MonteCarlo;
    // Starting value of the learned Gaussian log-variance. A small noise
    // level keeps the decoder from explaining the targets as pure noise
    // before the latent code carries any information.
    double decoder_log_var_init = -4.0;

    void validate() const;
    // Number of mixture components the prior actually has.
    std::size_t components() const { return prior == PriorKind::ConditionalGaussian ? 1 : k; }
    bool operator==(const ModelConfig&) const = default;
};

struct PriorSpec {
    PriorKind kind = PriorKind::Cdv;
    std::size_t k = 1;
    nn::MlpSpec network;  // empty for cvamp, whose parameters are pseudo targets

    bool has_network() const { return !network.sizes.empty(); }
};

// Parameter name layout: "encoder.*", "decoder.*", "prior.*";
// "decoder.log_var" (1×N_y) for Gaussian likelihoods and
// "prior.pseudo_targets" (K×N_y) for cvamp.
struct ClvmModel {
    ModelConfig config;
    nn::MlpSpec encoder;
    nn::MlpSpec decoder;
    PriorSpec prior;
    ParameterSet params;

    // `init_targets`, when non-empty, supplies rows for cvamp pseudo targets.
    static ClvmModel create(const ModelConfig& cfg, std::uint64_t seed, const Matrix& init_targets = {});
    // Structure only, parameters empty (used when loading checkpoints).
    static ClvmModel skeleton(const ModelConfig& cfg);

    // Width of the prior's learned output: 2·N_z (conditional Gaussian),
    // 2·K·N_z (cmog heads), K·N_z (cdv pseudo latents) or K·N_y (cvamp pseudo
    // targets).
    std::size_t prior_head_width() const;
};

inline constexpr std::string_view kEncoder = "encoder";
inline constexpr std::string_view kDecoder = "decoder";
inline constexpr std::string_view kPrior = "prior";
inline constexpr std::string_view kDecoderLogVar = "decoder.log_var";
inline constexpr std::string_view kPseudoTargets = "prior.pseudo_targets";

// ---------------------------------------------------------------------------
// Tape-level building blocks (rows are batch items).

dist::GaussianVar encode(const ClvmModel& m, const ad::VarMap& p, ad::Var x, ad::Var y);
// Raw decoder output: Gaussian mean or Bernoulli logits.
ad::Var decode(const ClvmModel& m, const ad::VarMap& p, ad::Var z, ad::Var x);
// Mean of the likelihood: the Gaussian mean or sigmoid(logits).
ad::Var decoder_mean(const ClvmModel& m, const ad::VarMap& p, ad::Var z, ad::Var x);
ad::Var log_likelihood(const ClvmModel& m, const ad::VarMap& p, ad::Var decoded, ad::Var y);
dist::MixtureVar prior_components(const ClvmModel& m, const ad::VarMap& p, ad::Var x);

struct ElboTerms {
    ad::Var reconstruction;          // B×1, averaged over draws
    ad::Var prior_minus_posterior;   // B×1, already scaled by beta
    ad::Var total;                   // B×1
};

// noise: (S·B)×N_z, draw-major (row s·B + b is draw s of item b).
ElboTerms elbo(const ClvmModel& m, const ad::VarMap& p, ad::Var x, ad::Var y, ad::Var noise,
               std::size_t samples, double beta);

// ---------------------------------------------------------------------------
// Value-level operations.

struct ElboEstimate {
    double total = 0.0;
    double reconstruction = 0.0;
    double prior_minus_posterior = 0.0;
};

dist::GaussianParams encode(const ClvmModel& m, const Matrix& x, const Matrix& y);
Matrix decode(const ClvmModel& m, const Matrix& z, const Matrix& x);
Matrix decoder_mean(const ClvmModel& m, const Matrix& z, const Matrix& x);
// x is a single condition row; returns K single-row components.
dist::MixtureParams prior_components(const ClvmModel& m, const Matrix& x);
// Batch-mean ELBO under the given draws; noise as in the tape-level elbo.
ElboEstimate elbo(const ClvmModel& m, const Matrix& x, const Matrix& y, const Matrix& noise, std::size_t samples,
                  double beta);

// Mean over the dataset of per-datum ELBOs (beta = 1) with S fresh draws per
// datum. Draws are generated datum by datum from `seed`, so results do not
// depend on the chunk size.
ElboEstimate estimate_elbo(const ClvmModel& m, const data::DatasetSplit& ds, std::size_t samples,
                           std::uint64_t seed, std::size_t chunk = 64);

}  // namespace cvae
