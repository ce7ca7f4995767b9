#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cvae/eval.hpp"
#include "support.hpp"

using namespace cvae;
using testing::random_matrix;

namespace {

// Oracle for sqrt(det(AᵀA)) with A of shape m×2, via the explicit 2×2 Gram
// determinant.
double gram_root(const Matrix& a) {
    double g00 = 0, g01 = 0, g11 = 0;
    for (std::size_t r = 0; r < a.rows; ++r) {
        g00 += a(r, 0) * a(r, 0);
        g01 += a(r, 0) * a(r, 1);
        g11 += a(r, 1) * a(r, 1);
    }
    return std::sqrt(g00 * g11 - g01 * g01);
}

ad::VectorFunction linear_map(const Matrix& a) {
    return [a](ad::Tape& t, ad::Var z) { return ad::matmul_nt(z, t.constant(a)); };
}

ClvmModel linear_decoder_model(const Matrix& w) {
    ModelConfig cfg;
    cfg.target_dim = w.rows;
    cfg.latent_dim = w.cols;
    cfg.hidden = {};
    auto m = ClvmModel::create(cfg, 1);
    m.params.at("decoder.W0") = w;
    return m;
}

// Classifier stand-in: the class id sits in column 0 of each input.
Matrix column_zero_classes(const Matrix& inputs, double confidence) {
    Matrix p(inputs.rows, 10, (1.0 - confidence) / 9.0);
    for (std::size_t r = 0; r < inputs.rows; ++r) p(r, static_cast<std::size_t>(inputs(r, 0))) = confidence;
    return p;
}

Matrix identity_assembler(const Matrix& targets, const Matrix&) { return targets; }

// Brute-force oracle for the neighbour profile: every (point, component,
// radius) triple is tested independently.
std::vector<std::vector<double>> brute_force_profile(const Matrix& encoded, const std::vector<Matrix>& means,
                                                     const std::vector<double>& radii) {
    const std::size_t k = means.front().rows;
    std::vector<std::vector<double>> counts(k, std::vector<double>(radii.size(), 0.0));
    for (const auto& m : means)
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t r = 0; r < radii.size(); ++r) {
                std::size_t hits = 0;
                for (std::size_t i = 0; i < encoded.rows; ++i) {
                    double d2 = 0.0;
                    for (std::size_t j = 0; j < encoded.cols; ++j) d2 += std::pow(encoded(i, j) - m(c, j), 2);
                    if (std::sqrt(d2) <= radii[r]) ++hits;
                }
                counts[c][r] += static_cast<double>(hits);
            }
    for (auto& row : counts)
        for (double& v : row) v /= static_cast<double>(means.size());
    return counts;
}

}  // namespace

TEST_CASE("magnification factor of simple maps") {
    const std::vector<double> z{0.2, -0.4};
    CHECK(eval::magnification_factor(linear_map(Matrix(2, 2, {2, 0, 0, 2})), z) == 4.0);
    auto constant = [](ad::Tape& t, ad::Var v) { return ad::add(ad::scale(v, 0.0), t.constant(Matrix(1, 2, 1.0))); };
    CHECK(eval::magnification_factor(constant, z) == 0.0);
}

TEST_CASE("magnification factor of random linear maps") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Matrix a = random_matrix(3, 2, s);
        const Matrix z = random_matrix(1, 2, 50 + s);
        const double expected = gram_root(a);
        CHECK(std::abs(eval::magnification_factor(linear_map(a), z.data) - expected) <= 1e-8 * std::max(1.0, expected));
    }
}

TEST_CASE("magnification factor through a model decoder") {
    const Matrix w = random_matrix(3, 2, 7);
    const auto m = linear_decoder_model(w);
    const std::vector<double> z{0.5, 0.5};
    CHECK(std::abs(eval::magnification_factor(m, z, Matrix(1, 1)) - gram_root(w)) < 1e-10);
    const std::vector<double> wrong{0.5};
    CHECK_THROWS_AS(eval::magnification_factor(m, wrong, Matrix(1, 1)), ContractError);
}

TEST_CASE("magnification grid layout") {
    const Matrix w = random_matrix(3, 2, 8);
    const auto m = linear_decoder_model(w);
    const auto cells = eval::magnification_grid(m, Matrix(1, 1), -3.0, 3.0, 50);
    REQUIRE(cells.size() == 2500);
    CHECK(cells[0].z0 == -3.0);
    CHECK(cells[0].z1 == -3.0);
    CHECK(cells[1].z0 > cells[0].z0);
    CHECK(cells[1].z1 == -3.0);
    CHECK(cells.back().z0 == doctest::Approx(3.0));
    CHECK(cells.back().z1 == doctest::Approx(3.0));
    for (const auto& c : cells) CHECK(std::abs(c.value - gram_root(w)) < 1e-10);
    CHECK_THROWS_AS(eval::magnification_grid(m, Matrix(1, 1), -3.0, 3.0, 1), ContractError);
}

TEST_CASE("generate: degenerate prior and noise-free likelihood") {
    ModelConfig cfg;
    cfg.prior = PriorKind::ConditionalGaussian;
    cfg.kl = KlEstimator::Analytic;
    cfg.k = 1;
    cfg.hidden = {8};
    auto m = ClvmModel::create(cfg, 2);
    Matrix& w = m.params.at("prior.W1");
    w = Matrix(w.rows, w.cols);
    m.params.at("prior.b1") = Matrix(1, 4, {0.3, -0.6, -30.0, -30.0});
    const Matrix x(1, 1, 0.7);
    const Matrix y = eval::generate(m, x, 200, 3, eval::GenerateMode::Mean);
    const double centre = decoder_mean(m, Matrix(1, 2, {0.3, -0.6}), x)(0, 0);
    for (double v : y.data) CHECK(std::abs(v - centre) < 0.01);
}

TEST_CASE("generate: determinism and preconditions") {
    ModelConfig cfg;
    cfg.hidden = {8};
    const auto m = ClvmModel::create(cfg, 4);
    const Matrix x(1, 1, 1.5);
    const Matrix a = eval::generate(m, x, 50, 9);
    CHECK(a.rows == 50);
    CHECK(a.cols == 1);
    CHECK(eval::generate(m, x, 50, 9) == a);
    CHECK(!(eval::generate(m, x, 50, 10) == a));
    CHECK_THROWS_AS(eval::generate(m, x, 0, 9), ContractError);
    CHECK_THROWS_AS(eval::generate(m, Matrix(2, 1), 5, 9), ContractError);

    cfg.likelihood = Likelihood::Bernoulli;
    const auto mb = ClvmModel::create(cfg, 4);
    for (double v : eval::generate(mb, x, 20, 1).data) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("gap mass: generator pinned to the modes") {
    const auto spec = data::ToySpec::default_spec();
    eval::TargetGenerator pinned = [&](const Matrix& cond, std::size_t n, std::uint64_t) {
        const auto& modes = spec.find_interval(cond(0, 0))->modes;
        Matrix y(n, 1);
        for (std::size_t i = 0; i < n; ++i) y(i, 0) = modes[i % modes.size()];
        return y;
    };
    const std::vector<double> conds{1.2, 1.7, 3.1, 3.9};
    CHECK(eval::gap_mass(pinned, conds, spec, 100, 0) == 0.0);
}

TEST_CASE("gap mass: uniform generator on three modes") {
    const auto spec = data::ToySpec::default_spec();
    eval::TargetGenerator uniform = [](const Matrix&, std::size_t n, std::uint64_t seed) {
        Rng rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Matrix y(n, 1);
        for (double& v : y.data) v = u(rng);
        return y;
    };
    const std::vector<double> conds{1.5};
    const double g = eval::gap_mass(uniform, conds, spec, 10000, 4);
    CHECK(std::abs(g - (1.0 - 6 * 4 * 0.02)) < 0.05);
    CHECK(eval::gap_mass(uniform, conds, spec, 10000, 4) == g);

    eval::TargetGenerator reversed = [&](const Matrix& c, std::size_t n, std::uint64_t seed) {
        Matrix y = uniform(c, n, seed);
        std::reverse(y.data.begin(), y.data.end());
        return y;
    };
    CHECK(eval::gap_mass(reversed, conds, spec, 10000, 4) == g);
}

TEST_CASE("gap mass preconditions") {
    const auto spec = data::ToySpec::default_spec();
    eval::TargetGenerator zero = [](const Matrix&, std::size_t n, std::uint64_t) { return Matrix(n, 1); };
    const std::vector<double> outside{5.0}, single_mode{0.5};
    CHECK_THROWS_AS(eval::gap_mass(zero, outside, spec, 10, 0), ContractError);
    CHECK_THROWS_AS(eval::gap_mass(zero, single_mode, spec, 10, 0), ContractError);
}

TEST_CASE("variety: a fixed target counts one class") {
    eval::TargetGenerator fixed = [](const Matrix&, std::size_t n, std::uint64_t) { return Matrix(n, 1, 4.0); };
    const Matrix conds(5, 1);
    auto confident = [](const Matrix& in) { return column_zero_classes(in, 0.95); };
    auto unsure = [](const Matrix& in) { return column_zero_classes(in, 0.5); };
    const auto r = eval::variety_score(fixed, confident, conds, identity_assembler, 10, 0.9, 1);
    CHECK(r.counts == std::vector<std::size_t>(5, 1));
    CHECK(r.confident_fraction == 1.0);
    const auto u = eval::variety_score(fixed, unsure, conds, identity_assembler, 10, 0.9, 1);
    CHECK(u.counts == std::vector<std::size_t>(5, 0));
    CHECK(u.confident_fraction == 0.0);
}

TEST_CASE("variety: cycling three exemplars counts three") {
    eval::TargetGenerator cycle = [](const Matrix&, std::size_t n, std::uint64_t) {
        Matrix y(n, 1);
        for (std::size_t i = 0; i < n; ++i) y(i, 0) = static_cast<double>(i % 3);
        return y;
    };
    auto confident = [](const Matrix& in) { return column_zero_classes(in, 0.95); };
    const auto r = eval::variety_score(cycle, confident, Matrix(4, 1), identity_assembler, 10, 0.9, 2);
    CHECK(r.counts == std::vector<std::size_t>(4, 3));
    for (auto c : r.counts) CHECK(c <= 10);
    CHECK_THROWS_AS(eval::variety_score(cycle, confident, Matrix(4, 1), identity_assembler, 0, 0.9, 2), ContractError);
    CHECK_THROWS_AS(eval::variety_score(cycle, confident, Matrix(4, 1), identity_assembler, 10, 1.0, 2), ContractError);
}

TEST_CASE("image assembler stacks targets over the condition") {
    const Matrix targets(2, 504, 1.0);
    const Matrix cond(1, 280, 0.0);
    const Matrix imgs = eval::assemble_images(targets, cond);
    CHECK(imgs.rows == 2);
    CHECK(imgs.cols == 784);
    CHECK(imgs(0, 503) == 1.0);
    CHECK(imgs(0, 504) == 0.0);
}

TEST_CASE("nn profile: trivial placements") {
    const Matrix point(1, 2, {0.5, -1.0});
    const std::vector<Matrix> on_point{point};
    const std::vector<double> radii{0.0, 1.0, 2.0};
    const auto p = eval::nn_profile(point, on_point, radii);
    REQUIRE(p.counts.size() == 1);
    CHECK(p.counts[0] == std::vector<double>{1, 1, 1});

    const Matrix data = random_matrix(30, 2, 3);
    const std::vector<Matrix> far{Matrix(1, 2, {100.0, 0.0})};
    std::vector<double> ten;
    for (int r = 1; r <= 10; ++r) ten.push_back(r);
    CHECK(eval::nn_profile(data, far, ten).counts[0] == std::vector<double>(10, 0.0));
}

TEST_CASE("nn profile matches a brute-force count") {
    std::vector<double> radii;
    for (int r = 1; r <= 10; ++r) radii.push_back(0.25 * r);
    for (std::size_t n : {200u, 500u}) {
        const Matrix encoded = random_matrix(n, 3, n);
        std::vector<Matrix> means;
        for (std::uint64_t c = 0; c < 6; ++c) means.push_back(random_matrix(4, 3, 1000 + n + c));
        const auto p = eval::nn_profile(encoded, means, radii);
        CHECK(p.radii == radii);
        CHECK(p.counts == brute_force_profile(encoded, means, radii));
        for (const auto& row : p.counts) {
            CHECK(std::is_sorted(row.begin(), row.end()));
            CHECK(row.back() <= static_cast<double>(n));
        }
    }
}

TEST_CASE("nn profile preconditions") {
    const Matrix encoded = random_matrix(5, 2, 1);
    const std::vector<Matrix> means{random_matrix(2, 2, 2)};
    const std::vector<double> decreasing{2.0, 1.0}, negative{-1.0};
    CHECK_THROWS_AS(eval::nn_profile(encoded, means, decreasing), ContractError);
    CHECK_THROWS_AS(eval::nn_profile(encoded, means, negative), ContractError);

    ModelConfig cfg;
    cfg.hidden = {4};
    const auto m = ClvmModel::create(cfg, 1);
    const data::DatasetSplit empty{Matrix(0, 1), Matrix(0, 1), "empty"};
    const std::vector<double> radii{1.0};
    CHECK_THROWS_AS(eval::component_nn_profile(m, empty, Matrix(1, 1), radii), ContractError);
}

TEST_CASE("component profile uses posterior means and prior component means") {
    ModelConfig cfg;
    cfg.prior = PriorKind::Cmog;
    cfg.k = 4;
    cfg.hidden = {8};
    const auto m = ClvmModel::create(cfg, 5);
    auto spec = data::ToySpec::default_spec();
    spec.samples_per_interval = 25;
    const auto ds = data::gen_toy_structured(spec, 6);
    const Matrix conds(3, 1, {0.5, 1.5, 3.5});
    const std::vector<double> radii{0.5, 1.0, 2.0};
    const auto p = eval::component_nn_profile(m, ds, conds, radii);
    const auto means = eval::component_means(m, conds);
    CHECK(p.counts == brute_force_profile(encode(m, ds.conditions, ds.targets).mean, means, radii));
    CHECK(eval::encode_means(m, ds, 7) == eval::encode_means(m, ds));
}

TEST_CASE("single-linkage cluster count") {
    const Matrix pts(5, 2, {0, 0, 0.3, 0, 0.6, 0, 5, 5, 9, 9});
    CHECK(eval::count_clusters(pts, 0.5) == 3);
    CHECK(eval::count_clusters(pts, 0.25) == 5);
    CHECK(eval::count_clusters(pts, 100.0) == 1);
}

TEST_CASE("classifier separates two blobs and is deterministic") {
    Rng rng(8);
    std::normal_distribution<double> noise(0.0, 0.3);
    Matrix x(400, 2);
    std::vector<std::uint8_t> labels(400);
    for (std::size_t i = 0; i < 400; ++i) {
        labels[i] = static_cast<std::uint8_t>(i % 2);
        const double c = labels[i] ? 2.0 : -2.0;
        x(i, 0) = c + noise(rng);
        x(i, 1) = -c + noise(rng);
    }
    eval::ClassifierConfig cfg;
    cfg.hidden = {16};
    cfg.classes = 2;
    cfg.epochs = 5;
    cfg.batch_size = 32;
    cfg.seed = 3;
    const auto heldout_x = take_rows(x, 300, 100);
    const std::vector<std::uint8_t> heldout_y(labels.begin() + 300, labels.end());
    const auto c = eval::train_classifier(take_rows(x, 0, 300), std::span(labels).first(300), heldout_x, heldout_y, cfg);
    CHECK(c.heldout_accuracy == 1.0);
    CHECK(eval::accuracy(c, heldout_x, heldout_y) == 1.0);
    const auto again = eval::train_classifier(take_rows(x, 0, 300), std::span(labels).first(300), heldout_x, heldout_y, cfg);
    CHECK(again.params == c.params);
    const Matrix p = c.predict_proba(heldout_x);
    for (std::size_t r = 0; r < p.rows; ++r) CHECK(p(r, 0) + p(r, 1) == doctest::Approx(1.0));
}
