#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvae/checkpoint.hpp"
#include "cvae/model.hpp"
#include "cvae/train.hpp"
#include "support.hpp"

using namespace cvae;
using testing::random_matrix;

namespace {

ModelConfig small_config(PriorKind prior, Likelihood lik = Likelihood::Gaussian,
                         DecoderConditioning dec = DecoderConditioning::LatentOnly) {
    ModelConfig c;
    c.condition_dim = 2;
    c.target_dim = lik == Likelihood::Gaussian ? 3 : 4;
    c.latent_dim = 2;
    c.prior = prior;
    c.k = 3;
    c.hidden = {6};
    c.likelihood = lik;
    c.decoder = dec;
    c.kl = prior == PriorKind::ConditionalGaussian ? KlEstimator::Analytic : KlEstimator::MonteCarlo;
    c.decoder_log_var_init = -1.0;
    return c;
}

Matrix binary_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Matrix m = testing::uniform_matrix(rows, cols, seed, 0.0, 1.0);
    for (double& v : m.data) v = v < 0.5 ? 0.0 : 1.0;
    return m;
}

Matrix targets_for(const ModelConfig& c, std::size_t rows, std::uint64_t seed) {
    return c.likelihood == Likelihood::Gaussian ? random_matrix(rows, c.target_dim, seed)
                                                : binary_matrix(rows, c.target_dim, seed);
}

void zero_prefix(ClvmModel& m, std::string_view prefix) {
    for (auto& [name, value] : m.params)
        if (name.starts_with(prefix)) value = Matrix(value.rows, value.cols);
}

data::DatasetSplit small_toy(std::size_t per_interval, std::uint64_t seed) {
    auto spec = data::ToySpec::default_spec();
    spec.samples_per_interval = per_interval;
    return data::gen_toy_structured(spec, seed);
}

ModelConfig toy_config(PriorKind prior) {
    ModelConfig c;
    c.prior = prior;
    c.k = 4;
    c.hidden = {16, 16};
    if (prior == PriorKind::ConditionalGaussian) {
        c.kl = KlEstimator::Analytic;
        c.decoder = DecoderConditioning::LatentAndCondition;
    }
    return c;
}

}  // namespace

TEST_CASE("zero-initialized encoder yields a standard normal posterior") {
    auto m = ClvmModel::create(small_config(PriorKind::Cdv), 1);
    zero_prefix(m, "encoder.");
    const auto q = encode(m, random_matrix(3, 2, 2), random_matrix(3, 3, 3));
    CHECK(q.mean == Matrix(3, 2));
    CHECK(q.log_var == Matrix(3, 2));
}

TEST_CASE("encode is batch-consistent") {
    const auto m = ClvmModel::create(small_config(PriorKind::Cmog), 2);
    const Matrix x = random_matrix(5, 2, 4), y = random_matrix(5, 3, 5);
    const auto batch = encode(m, x, y);
    for (std::size_t r = 0; r < 5; ++r) {
        const auto one = encode(m, take_rows(x, r, 1), take_rows(y, r, 1));
        CHECK(one.mean == take_rows(batch.mean, r, 1));
        CHECK(one.log_var == take_rows(batch.log_var, r, 1));
    }
    CHECK_THROWS_AS(encode(m, random_matrix(1, 3, 1), random_matrix(1, 3, 2)), ContractError);
}

TEST_CASE("latent-only decoding ignores the condition") {
    const auto m = ClvmModel::create(small_config(PriorKind::Cdv), 3);
    const Matrix z = random_matrix(4, 2, 6);
    CHECK(decode(m, z, random_matrix(4, 2, 7)) == decode(m, z, random_matrix(4, 2, 8)));

    const auto mc = ClvmModel::create(small_config(PriorKind::Cdv, Likelihood::Gaussian,
                                                   DecoderConditioning::LatentAndCondition), 3);
    CHECK(!(decode(mc, z, random_matrix(4, 2, 7)) == decode(mc, z, random_matrix(4, 2, 8))));
}

TEST_CASE("zero-initialized decoder gives a constant output") {
    auto m = ClvmModel::create(small_config(PriorKind::Cdv, Likelihood::Bernoulli), 4);
    zero_prefix(m, "decoder.");
    const Matrix out = decoder_mean(m, random_matrix(6, 2, 9), random_matrix(6, 2, 10));
    for (double v : out.data) CHECK(v == 0.5);
}

TEST_CASE("cdv with one component and zero networks is the zero-init posterior") {
    auto cfg = small_config(PriorKind::Cdv);
    cfg.k = 1;
    auto m = ClvmModel::create(cfg, 5);
    for (auto& [name, value] : m.params)
        if (name != kDecoderLogVar) value = Matrix(value.rows, value.cols);
    const auto mix = prior_components(m, random_matrix(1, 2, 11));
    REQUIRE(mix.size() == 1);
    CHECK(mix.components[0].mean == Matrix(1, 2));
    CHECK(mix.components[0].log_var == Matrix(1, 2));
}

TEST_CASE("cvamp components do not depend on the condition when the encoder ignores it") {
    auto m = ClvmModel::create(small_config(PriorKind::Cvamp), 6, random_matrix(20, 3, 12));
    Matrix& w = m.params.at("encoder.W0");
    for (std::size_t r = 0; r < w.rows; ++r)
        for (std::size_t c = 0; c < 2; ++c) w(r, c) = 0.0;
    const auto a = prior_components(m, random_matrix(1, 2, 13));
    const auto b = prior_components(m, random_matrix(1, 2, 14));
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a.components[k].mean == b.components[k].mean);
        CHECK(a.components[k].log_var == b.components[k].log_var);
    }
}

TEST_CASE("cmog components are the prior network heads") {
    auto cfg = small_config(PriorKind::Cmog);
    cfg.k = 32;
    const auto m = ClvmModel::create(cfg, 7);
    const Matrix x = random_matrix(1, 2, 15);
    const Matrix heads = nn::mlp_apply(m.prior.network, kPrior, m.params, x);
    const auto mix = prior_components(m, x);
    REQUIRE(mix.size() == 32);
    for (std::size_t k = 0; k < 32; ++k)
        for (std::size_t d = 0; d < 2; ++d) {
            CHECK(mix.components[k].mean(0, d) == heads(0, k * 2 + d));
            CHECK(mix.components[k].log_var(0, d) == std::clamp(heads(0, (32 + k) * 2 + d), -10.0, 10.0));
        }
}

TEST_CASE("cdv prior head has half the width of the cmog head") {
    const auto cdv = ClvmModel::create(small_config(PriorKind::Cdv), 1);
    const auto cmog = ClvmModel::create(small_config(PriorKind::Cmog), 1);
    CHECK(cdv.prior_head_width() == 3 * 2);
    CHECK(2 * cdv.prior_head_width() == cmog.prior_head_width());
    CHECK(cdv.params.at("prior.W1").rows * 2 == cmog.params.at("prior.W1").rows);
}

TEST_CASE("model config validation") {
    auto c = small_config(PriorKind::Cmog);
    c.kl = KlEstimator::Analytic;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = small_config(PriorKind::Cdv);
    c.latent_dim = 0;
    CHECK_THROWS_AS(c.validate(), ContractError);
    c = small_config(PriorKind::Cdv);
    c.decoder_log_var_init = 11.0;
    CHECK_THROWS_AS(c.validate(), ContractError);
}

TEST_CASE("beta zero leaves only the reconstruction term") {
    for (auto prior : {PriorKind::ConditionalGaussian, PriorKind::Cmog, PriorKind::Cvamp, PriorKind::Cdv}) {
        const auto cfg = small_config(prior);
        const auto m = ClvmModel::create(cfg, 8);
        const auto e = elbo(m, random_matrix(4, 2, 16), targets_for(cfg, 4, 17), random_matrix(8, 2, 18), 2, 0.0);
        CHECK(e.prior_minus_posterior == 0.0);
        CHECK(e.total == e.reconstruction);
    }
}

TEST_CASE("elbo is affine in beta") {
    for (auto prior : {PriorKind::ConditionalGaussian, PriorKind::Cmog, PriorKind::Cvamp, PriorKind::Cdv}) {
        const auto cfg = small_config(prior);
        const auto m = ClvmModel::create(cfg, 9);
        const Matrix x = random_matrix(5, 2, 19), y = targets_for(cfg, 5, 20), noise = random_matrix(5, 2, 21);
        const double e0 = elbo(m, x, y, noise, 1, 0.0).total;
        const double e1 = elbo(m, x, y, noise, 1, 1.0).total;
        const double eh = elbo(m, x, y, noise, 1, 0.37).total;
        CHECK(std::abs(eh - (e0 + 0.37 * (e1 - e0))) < 1e-12);
    }
}

TEST_CASE("elbo decomposition is exact") {
    const auto cfg = small_config(PriorKind::Cdv);
    const auto m = ClvmModel::create(cfg, 10);
    const auto e = elbo(m, random_matrix(3, 2, 22), targets_for(cfg, 3, 23), random_matrix(3, 2, 24), 1, 1.0);
    CHECK(e.total == e.reconstruction + e.prior_minus_posterior);
}

TEST_CASE("elbo rejects bad arguments") {
    const auto cfg = small_config(PriorKind::Cdv);
    const auto m = ClvmModel::create(cfg, 11);
    const Matrix x = random_matrix(3, 2, 25), y = targets_for(cfg, 3, 26);
    CHECK_THROWS_AS(elbo(m, x, y, random_matrix(3, 2, 27), 0, 1.0), ContractError);
    CHECK_THROWS_AS(elbo(m, x, y, random_matrix(3, 2, 27), 1, 1.5), ContractError);
    CHECK_THROWS_AS(elbo(m, x, y, random_matrix(4, 2, 27), 1, 1.0), ContractError);
    const auto mb = ClvmModel::create(small_config(PriorKind::Cdv, Likelihood::Bernoulli), 11);
    CHECK_THROWS_AS(elbo(mb, x, random_matrix(3, 4, 28), random_matrix(3, 2, 27), 1, 1.0), ContractError);
}

TEST_CASE("elbo gradients pass finite differences for every prior and likelihood") {
    for (auto lik : {Likelihood::Gaussian, Likelihood::Bernoulli})
        for (auto prior : {PriorKind::ConditionalGaussian, PriorKind::Cmog, PriorKind::Cvamp, PriorKind::Cdv}) {
            CAPTURE(to_string(prior));
            CAPTURE(to_string(lik));
            const auto cfg = small_config(prior, lik);
            const auto m = ClvmModel::create(cfg, 12, targets_for(cfg, 10, 29));
            const Matrix x = random_matrix(1, 2, 30), y = targets_for(cfg, 1, 31), noise = random_matrix(1, 2, 32);
            auto f = [&](ad::Tape& t, const ad::VarMap& p) {
                return ad::mean(elbo(m, p, t.constant(x), t.constant(y), t.constant(noise), 1, 1.0).total);
            };
            CHECK(ad::check_gradient(f, m.params, 1e-5) < 1e-4);
        }
}

TEST_CASE("prior term has zero mean when posterior equals prior") {
    auto cfg = small_config(PriorKind::ConditionalGaussian);
    cfg.kl = KlEstimator::MonteCarlo;
    auto m = ClvmModel::create(cfg, 13);
    zero_prefix(m, "encoder.");
    zero_prefix(m, "prior.");
    m.params.at("encoder.b1") = Matrix(1, 4, {0.3, -0.2, -0.5, 0.4});
    m.params.at("prior.b1") = m.params.at("encoder.b1");
    const std::size_t s = 10000;
    const Matrix x = random_matrix(1, 2, 33), y = random_matrix(1, 3, 34);
    Rng rng(35);
    const Matrix noise = standard_normal(s, 2, rng);
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < s; ++i) {
        const double v = elbo(m, x, y, take_rows(noise, i, 1), 1, 1.0).prior_minus_posterior;
        sum += v;
        sq += v * v;
    }
    const double mean = sum / s;
    const double se = std::sqrt(std::max(sq / s - mean * mean, 0.0) / s);
    CHECK(std::abs(mean) <= 3 * se + 1e-12);
}

TEST_CASE("elbo is tight for a linear Gaussian model at the optimal posterior") {
    // y = a z + b + noise, z ~ N(0, 1); the exact posterior is Gaussian and
    // linear in y, so the bound equals log p(y).
    const double a = 1.3, b = 0.4, noise_var = 0.25, y = 1.1;
    ModelConfig cfg;
    cfg.condition_dim = 1;
    cfg.target_dim = 1;
    cfg.latent_dim = 1;
    cfg.prior = PriorKind::ConditionalGaussian;
    cfg.hidden = {};
    cfg.kl = KlEstimator::MonteCarlo;
    auto m = ClvmModel::create(cfg, 14);
    const double post_var = noise_var / (a * a + noise_var);
    m.params.at("decoder.W0") = Matrix(1, 1, a);
    m.params.at("decoder.b0") = Matrix(1, 1, b);
    m.params.at(kDecoderLogVar) = Matrix(1, 1, std::log(noise_var));
    m.params.at("prior.W0") = Matrix(2, 1);
    m.params.at("prior.b0") = Matrix(1, 2);
    m.params.at("encoder.W0") = Matrix(2, 2, {0.0, a / (a * a + noise_var), 0.0, 0.0});
    m.params.at("encoder.b0") = Matrix(1, 2, {-a * b / (a * a + noise_var), std::log(post_var)});

    const std::size_t s = 100000;
    Rng rng(36);
    const Matrix noise = standard_normal(s, 1, rng);
    const double bound = elbo(m, Matrix(1, 1, 0.0), Matrix(1, 1, y), noise, s, 1.0).total;

    // log p(y) = log ∫ N(y; a z + b, σ²) N(z; 0, 1) dz by trapezoid quadrature.
    const double h = 1e-3;
    double mass = 0.0;
    for (double z = -12.0; z <= 12.0; z += h) {
        const double r = y - a * z - b;
        mass += std::exp(-0.5 * r * r / noise_var - 0.5 * z * z) / (2 * M_PI * std::sqrt(noise_var)) * h;
    }
    CHECK(std::abs(bound - std::log(mass)) < 1e-3);
}

TEST_CASE("training for zero epochs returns the model unchanged") {
    const auto ds = small_toy(20, 1);
    const auto m = ClvmModel::create(toy_config(PriorKind::Cdv), 15);
    TrainConfig tc;
    tc.epochs = 0;
    const auto res = train(m, ds, tc);
    CHECK(res.history.empty());
    CHECK(res.model.params == m.params);
}

TEST_CASE("training is deterministic and records one estimate per epoch") {
    const auto ds = small_toy(30, 2);
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 16;
    tc.seed = 4;
    for (auto prior : {PriorKind::ConditionalGaussian, PriorKind::Cmog, PriorKind::Cvamp, PriorKind::Cdv}) {
        const auto m = ClvmModel::create(toy_config(prior), 16, ds.targets);
        const auto r1 = train(m, ds, tc);
        const auto r2 = train(m, ds, tc);
        REQUIRE(r1.history.size() == 3);
        for (std::size_t e = 0; e < 3; ++e) {
            CHECK(r1.history[e].total == r2.history[e].total);
            CHECK(r1.history[e].total == r1.history[e].reconstruction + r1.history[e].prior_minus_posterior);
        }
        CHECK(r1.model.params == r2.model.params);
        CHECK(!(r1.model.params == m.params));
    }
}

TEST_CASE("annealing spans the optimizer steps of the first epoch") {
    TrainConfig tc;
    tc.batch_size = 128;
    CHECK(tc.annealing_steps(2000) == 16);
    CHECK(tc.annealing_steps(128) == 1);
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), ContractError);
}

TEST_CASE("training improves the toy ELBO") {
    const auto ds = small_toy(100, 3);
    TrainConfig tc;
    tc.epochs = 20;
    tc.batch_size = 32;
    tc.adam.lr = 3e-3;
    const auto m = ClvmModel::create(toy_config(PriorKind::Cmog), 17);
    const auto before = estimate_elbo(m, ds, 10, 1);
    const auto res = train(m, ds, tc);
    CHECK(estimate_elbo(res.model, ds, 10, 1).total > before.total + 0.5);
}

TEST_CASE("a non-finite step aborts with the last good parameters") {
    auto ds = small_toy(20, 4);
    ds.targets(5, 0) = 1e200;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    const auto m = ClvmModel::create(toy_config(PriorKind::Cdv), 18);
    try {
        train(m, ds, tc);
        FAIL("expected TrainingFailure");
    } catch (const TrainingFailure& f) {
        CHECK(f.epoch() == 0);
        CHECK(f.last_good().params == m.params);
        CHECK(f.history().empty());
    }
}

TEST_CASE("estimate_elbo on one datum equals elbo under the same draws") {
    const auto cfg = small_config(PriorKind::Cdv);
    const auto m = ClvmModel::create(cfg, 19);
    data::DatasetSplit one{random_matrix(1, 2, 37), random_matrix(1, 3, 38), "one"};
    Rng rng(5);
    const Matrix noise = standard_normal(7, 2, rng);
    const auto direct = elbo(m, one.conditions, one.targets, noise, 7, 1.0);
    const auto est = estimate_elbo(m, one, 7, 5);
    CHECK(est.total == doctest::Approx(direct.total).epsilon(1e-14));
    CHECK(est.reconstruction == doctest::Approx(direct.reconstruction).epsilon(1e-14));
}

TEST_CASE("estimate_elbo does not depend on the chunk size") {
    const auto ds = small_toy(25, 5);
    const auto m = ClvmModel::create(toy_config(PriorKind::Cvamp), 20, ds.targets);
    const double a = estimate_elbo(m, ds, 4, 9, 64).total;
    const double b = estimate_elbo(m, ds, 4, 9, 7).total;
    CHECK(std::abs(a - b) < 1e-12);
    CHECK(estimate_elbo(m, ds, 4, 9).total == a);
}

TEST_CASE("checkpoint round trip reproduces evaluation exactly") {
    const auto dir = std::filesystem::temp_directory_path() / "cvae_test_checkpoint";
    std::filesystem::create_directories(dir);
    const auto ds = small_toy(20, 6);
    for (auto prior : {PriorKind::ConditionalGaussian, PriorKind::Cmog, PriorKind::Cvamp, PriorKind::Cdv}) {
        const auto m = ClvmModel::create(toy_config(prior), 21, ds.targets);
        save_checkpoint(dir / "model", m);
        const auto back = load_checkpoint(dir / "model");
        CHECK(back.config == m.config);
        CHECK(back.params == m.params);
        CHECK(estimate_elbo(back, ds, 5, 3).total == estimate_elbo(m, ds, 5, 3).total);
    }
    std::ofstream(dir / "model.params", std::ios::binary) << "cvae-params 1\nentries 1\nw 2 2 0\npayload 32\nxx";
    CHECK_THROWS_AS(load_checkpoint(dir / "model"), FormatError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("model metadata rejects missing keys") {
    std::stringstream meta("format = cvae-model 1\nlatent_dim = 2\n");
    CHECK_THROWS_AS(read_model_metadata(meta), FormatError);
}
