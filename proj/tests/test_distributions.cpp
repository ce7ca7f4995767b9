#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cvae/distributions.hpp"
#include "support.hpp"

using namespace cvae;
using doctest::Approx;
using testing::random_matrix;
using testing::uniform_matrix;

namespace {

dist::GaussianParams gaussian(std::initializer_list<double> mean, std::initializer_list<double> log_var) {
    return {Matrix::row_vector(mean), Matrix::row_vector(log_var)};
}

dist::GaussianParams random_gaussian(std::size_t width, std::uint64_t seed) {
    return {random_matrix(1, width, seed), uniform_matrix(1, width, seed + 1, -1.5, 1.0)};
}

}  // namespace

TEST_CASE("gaussian_log_prob closed-form values") {
    const std::vector<double> zero1{0.0}, zero2{0.0, 0.0}, three{3.0};
    CHECK(dist::gaussian_log_prob(gaussian({0}, {0}), zero1) == Approx(-0.9189385).epsilon(1e-7));
    CHECK(dist::gaussian_log_prob(gaussian({0, 0}, {0, 0}), zero2) == Approx(-1.8378771).epsilon(1e-7));
    CHECK(dist::gaussian_log_prob(gaussian({1}, {std::log(4.0)}), three) == Approx(-2.1120857).epsilon(1e-7));
    CHECK_THROWS_AS(dist::gaussian_log_prob(gaussian({0, 0}, {0, 0}), zero1), ContractError);
}

TEST_CASE("gaussian_log_prob peaks at the mean") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto p = random_gaussian(3, s);
        ParameterSet at;
        at.set("z", p.mean);
        auto f = [&](ad::Tape& t, const ad::VarMap& v) {
            return ad::sum(dist::gaussian_log_prob({t.constant(p.mean), t.constant(p.log_var)}, ad::lookup(v, "z")));
        };
        for (double g : ad::grad(f, at).at("z").data) CHECK(std::abs(g) <= 1e-10);
    }
}

TEST_CASE("tape and value-level densities agree") {
    const auto p = random_gaussian(4, 3);
    const Matrix z = random_matrix(1, 4, 4);
    ad::Tape t;
    auto v = dist::gaussian_log_prob({t.constant(p.mean), t.constant(p.log_var)}, t.constant(z));
    CHECK(v.value()(0, 0) == Approx(dist::gaussian_log_prob(p, z.data)).epsilon(1e-14));
}

TEST_CASE("gaussian_rsample reparameterization") {
    const auto p = gaussian({1.5, -2}, {0.3, -0.4});
    const std::vector<double> zero{0, 0}, noise{0.7, -1.1};
    CHECK(dist::gaussian_rsample(p, zero) == std::vector<double>{1.5, -2});
    CHECK(dist::gaussian_rsample(gaussian({0, 0}, {0, 0}), noise) == noise);

    const auto q = gaussian({2}, {std::log(9.0)});
    Rng rng(5);
    std::normal_distribution<double> normal;
    const int n = 10000;
    double sum = 0.0, sq = 0.0;
    std::vector<double> draws;
    for (int i = 0; i < n; ++i) {
        const std::vector<double> e{normal(rng)};
        draws.push_back(dist::gaussian_rsample(q, e)[0]);
        sum += draws.back();
    }
    const double mean = sum / n;
    for (double d : draws) sq += (d - mean) * (d - mean);
    CHECK(std::abs(mean - 2.0) < 2 * 3.0 / 100.0);
    CHECK(std::abs(sq / (n - 1) - 9.0) < 0.9);
}

TEST_CASE("gaussian_rsample is differentiable through mean and log variance") {
    ParameterSet at;
    at.set("m", random_matrix(3, 2, 1));
    at.set("lv", random_matrix(3, 2, 2, 0.5));
    const Matrix noise = random_matrix(3, 2, 3);
    auto f = [&](ad::Tape& t, const ad::VarMap& v) {
        return testing::probe(dist::gaussian_rsample({ad::lookup(v, "m"), ad::lookup(v, "lv")}, t.constant(noise)));
    };
    CHECK(ad::check_gradient(f, at, 1e-5) < 1e-5);
}

TEST_CASE("bernoulli_log_prob values and stability") {
    const std::vector<double> l0{0.0}, one{1.0}, l30{30.0}, lneg{-800.0}, zero{0.0};
    CHECK(dist::bernoulli_log_prob(l0, one) == Approx(-0.6931472).epsilon(1e-7));
    const double sat = dist::bernoulli_log_prob(l30, one);
    CHECK(std::isfinite(sat));
    CHECK(sat == Approx(0.0).epsilon(1e-12));
    CHECK(std::isfinite(dist::bernoulli_log_prob(lneg, zero)));
    const std::vector<double> logits{1, -1}, targets{1, 0};
    CHECK(dist::bernoulli_log_prob(logits, targets) == Approx(-0.6265234).epsilon(1e-7));
    const std::vector<double> half{0.5};
    CHECK_THROWS_AS(dist::bernoulli_log_prob(l0, half), ContractError);
}

TEST_CASE("mixture_log_prob examples") {
    const auto c = random_gaussian(2, 7);
    const std::vector<double> z{0.3, 0.1};
    dist::MixtureParams same{{c, c, c, c}};
    CHECK(dist::mixture_log_prob(same, z) == Approx(dist::gaussian_log_prob(c, z)).epsilon(1e-14));

    dist::MixtureParams two{{gaussian({10}, {0}), gaussian({-10}, {0})}};
    const std::vector<double> ten{10.0};
    CHECK(dist::mixture_log_prob(two, ten) == Approx(-1.6120857).epsilon(1e-7));

    CHECK_THROWS_AS(dist::mixture_log_prob(dist::MixtureParams{}, z), ContractError);
}

TEST_CASE("mixture_log_prob lies between the component bounds") {
    for (std::uint64_t s = 0; s < 50; ++s) {
        dist::MixtureParams m;
        for (std::uint64_t k = 0; k < 4; ++k) m.components.push_back(random_gaussian(3, 100 * s + 2 * k));
        const Matrix z = random_matrix(1, 3, 7000 + s, 3.0);
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& c : m.components) {
            lo = std::min(lo, dist::gaussian_log_prob(c, z.data));
            hi = std::max(hi, dist::gaussian_log_prob(c, z.data));
        }
        const double v = dist::mixture_log_prob(m, z.data);
        CHECK(v >= lo + std::log(0.25));
        CHECK(v <= hi);
    }
}

TEST_CASE("mixture density integrates to one on a 2-D grid") {
    dist::MixtureParams m;
    for (std::uint64_t k = 0; k < 5; ++k)
        m.components.push_back({uniform_matrix(1, 2, 40 + k, -3.0, 3.0), uniform_matrix(1, 2, 50 + k, -2.0, 0.5)});
    const double step = 0.05;
    double mass = 0.0;
    for (int i = 0; i <= 320; ++i)
        for (int j = 0; j <= 320; ++j) {
            const std::vector<double> z{-8.0 + i * step, -8.0 + j * step};
            mass += std::exp(dist::mixture_log_prob(m, z)) * step * step;
        }
    CHECK(std::abs(mass - 1.0) < 1e-2);
}

TEST_CASE("tape mixture density matches the value-level one per row") {
    dist::MixtureParams m;
    for (std::uint64_t k = 0; k < 3; ++k) m.components.push_back(random_gaussian(2, 60 + k));
    const Matrix z = random_matrix(1, 2, 70);
    ad::Tape t;
    std::vector<dist::GaussianVar> parts;
    for (const auto& c : m.components) parts.push_back({t.constant(c.mean), t.constant(c.log_var)});
    auto v = dist::mixture_log_prob(dist::stack_components(parts), t.constant(z));
    CHECK(v.value()(0, 0) == Approx(dist::mixture_log_prob(m, z.data)).epsilon(1e-13));
}

TEST_CASE("mixture_log_prob stays finite for far-apart components") {
    dist::MixtureParams m{{gaussian({0}, {-10}), gaussian({100}, {-10})}};
    const std::vector<double> z{50.0};
    CHECK(std::isfinite(dist::mixture_log_prob(m, z)));
}

TEST_CASE("kl_diag_gaussians closed form") {
    const auto p = random_gaussian(4, 11);
    CHECK(dist::kl_diag_gaussians(p, p) == Approx(0.0).epsilon(1e-15));
    CHECK(dist::kl_diag_gaussians(gaussian({1}, {0}), gaussian({0}, {0})) == Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(dist::kl_diag_gaussians(gaussian({1}, {0}), gaussian({0, 0}, {0, 0})), ContractError);
}

TEST_CASE("kl_diag_gaussians is non-negative") {
    for (std::uint64_t s = 0; s < 1000; ++s)
        CHECK(dist::kl_diag_gaussians(random_gaussian(3, 3 * s), random_gaussian(3, 3 * s + 7)) >= -1e-12);
}

TEST_CASE("kl_diag_gaussians matches a Monte-Carlo estimate") {
    const auto q = random_gaussian(4, 21), p = random_gaussian(4, 22);
    Rng rng(23);
    const Matrix noise = standard_normal(200000, 4, rng);
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < noise.rows; ++i) {
        const auto z = dist::gaussian_rsample(q, noise.row(i));
        const double d = dist::gaussian_log_prob(q, z) - dist::gaussian_log_prob(p, z);
        sum += d;
        sq += d * d;
    }
    const double n = static_cast<double>(noise.rows);
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - dist::kl_diag_gaussians(q, p)) < 3 * se);
}

TEST_CASE("log-densities stay finite across the clamp range") {
    for (double lv : {-10.0, 10.0})
        for (double z : {-100.0, 100.0}) {
            const std::vector<double> zz{z};
            CHECK(std::isfinite(dist::gaussian_log_prob(gaussian({-100}, {lv}), zz)));
            CHECK(std::isfinite(dist::mixture_log_prob({{gaussian({100}, {lv}), gaussian({-100}, {lv})}}, zz)));
        }
}
