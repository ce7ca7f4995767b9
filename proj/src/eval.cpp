#include "cvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <Eigen/Dense>

#include "cvae/random.hpp"

namespace cvae::eval {

namespace {

void require_condition_row(const ClvmModel& model, const Matrix& condition, const char* what) {
    if (condition.rows != 1 || condition.cols != model.config.condition_dim)
        throw ContractError(std::string(what) + ": expected one condition row of width " +
                            std::to_string(model.config.condition_dim));
}

double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

Matrix generate(const ClvmModel& model, const Matrix& condition, std::size_t n, std::uint64_t seed,
                GenerateMode mode) {
    if (n == 0) throw ContractError("generate: n must be at least 1");
    require_condition_row(model, condition, "generate");
    const dist::MixtureParams prior = prior_components(model, condition);
    const std::size_t nz = model.config.latent_dim;
    const std::size_t ny = model.config.target_dim;

    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, prior.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(n, nz);
    for (std::size_t i = 0; i < n; ++i) {
        const dist::GaussianParams& c = prior.components[pick(rng)];
        for (std::size_t j = 0; j < nz; ++j)
            z(i, j) = c.mean(0, j) + std::exp(0.5 * c.log_var(0, j)) * normal(rng);
    }

    Matrix x(n, condition.cols);
    for (std::size_t i = 0; i < n; ++i) std::copy(condition.data.begin(), condition.data.end(), x.row(i).begin());
    Matrix mean = decoder_mean(model, z, x);
    if (mode == GenerateMode::Mean) return mean;

    if (model.config.likelihood == Likelihood::Gaussian) {
        const Matrix& log_var = model.params.at(kDecoderLogVar);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < ny; ++j) {
                const double lv = std::clamp(log_var(0, j), dist::kLogVarMin, dist::kLogVarMax);
                mean(i, j) += std::exp(0.5 * lv) * normal(rng);
            }
    } else {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        for (double& p : mean.data) p = uniform(rng) < p ? 1.0 : 0.0;
    }
    return mean;
}

TargetGenerator model_generator(const ClvmModel& model, GenerateMode mode) {
    return [&model, mode](const Matrix& condition, std::size_t n, std::uint64_t seed) {
        return generate(model, condition, n, seed, mode);
    };
}

double magnification_factor(const ad::VectorFunction& g, std::span<const double> z) {
    const Matrix j = jacobian(g, z);
    Eigen::MatrixXd jm(j.rows, j.cols);
    for (std::size_t r = 0; r < j.rows; ++r)
        for (std::size_t c = 0; c < j.cols; ++c) jm(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j(r, c);
    const Eigen::MatrixXd gram = jm.transpose() * jm;
    double det = gram.determinant();
    if (!std::isfinite(det) || det < -1e-12)
        throw NumericalError("magnification_factor: det(JᵀJ) = " + std::to_string(det), 0, "determinant");
    det = std::max(det, 0.0);
    return std::sqrt(det);
}

double magnification_factor(const ClvmModel& model, std::span<const double> z, const Matrix& condition) {
    require_condition_row(model, condition, "magnification_factor");
    if (z.size() != model.config.latent_dim) throw ContractError("magnification_factor: latent width mismatch");
    const ad::VectorFunction g = [&model, &condition](ad::Tape& tape, ad::Var zv) {
        ad::VarMap vars;
        for (const auto& [name, value] : model.params) vars.emplace(name, tape.constant(value));
        return decoder_mean(model, vars, zv, tape.constant(condition));
    };
    return magnification_factor(g, z);
}

std::vector<FieldCell> magnification_grid(const ClvmModel& model, const Matrix& condition, double lo, double hi,
                                          std::size_t steps) {
    if (model.config.latent_dim != 2) throw ContractError("magnification_grid: needs a 2-D latent space");
    if (steps < 2 || !(hi > lo)) throw ContractError("magnification_grid: need steps >= 2 and hi > lo");
    std::vector<FieldCell> cells;
    cells.reserve(steps * steps);
    const double h = (hi - lo) / static_cast<double>(steps - 1);
    for (std::size_t i = 0; i < steps; ++i)
        for (std::size_t j = 0; j < steps; ++j) {
            const double z[2] = {lo + h * static_cast<double>(j), lo + h * static_cast<double>(i)};
            cells.push_back({z[0], z[1], magnification_factor(model, z, condition)});
        }
    return cells;
}

// ---------------------------------------------------------------------------

Matrix assemble_images(const Matrix& targets, const Matrix& condition) {
    Matrix out(targets.rows, data::kImageSide * data::kImageSide);
    for (std::size_t i = 0; i < targets.rows; ++i) {
        const auto img = data::assemble_image(targets.row(i), condition.row(0));
        std::copy(img.begin(), img.end(), out.row(i).begin());
    }
    return out;
}

VarietyReport variety_score(const TargetGenerator& generator, const ClassProbabilities& classify,
                            const Matrix& conditions, const Assembler& assemble, std::size_t n, double threshold,
                            std::uint64_t seed) {
    if (n == 0) throw ContractError("variety_score: n must be at least 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("variety_score: threshold must lie in (0, 1)");
    VarietyReport report;
    std::size_t kept = 0;
    for (std::size_t i = 0; i < conditions.rows; ++i) {
        const Matrix condition = take_rows(conditions, i, 1);
        const Matrix targets = generator(condition, n, mix_seed(seed, i));
        const Matrix probs = classify(assemble(targets, condition));
        std::set<std::size_t> classes;
        for (std::size_t r = 0; r < probs.rows; ++r) {
            const auto row = probs.row(r);
            const auto best = std::max_element(row.begin(), row.end());
            if (*best >= threshold) {
                classes.insert(static_cast<std::size_t>(best - row.begin()));
                ++kept;
            }
        }
        report.counts.push_back(classes.size());
    }
    const double total = static_cast<double>(conditions.rows * n);
    report.confident_fraction = total > 0 ? static_cast<double>(kept) / total : 0.0;
    return report;
}

// ---------------------------------------------------------------------------

std::vector<Matrix> component_means(const ClvmModel& model, const Matrix& conditions) {
    std::vector<Matrix> out;
    out.reserve(conditions.rows);
    for (std::size_t i = 0; i < conditions.rows; ++i) {
        const dist::MixtureParams mix = prior_components(model, take_rows(conditions, i, 1));
        Matrix means(mix.size(), model.config.latent_dim);
        for (std::size_t k = 0; k < mix.size(); ++k)
            std::copy(mix.components[k].mean.data.begin(), mix.components[k].mean.data.end(), means.row(k).begin());
        out.push_back(std::move(means));
    }
    return out;
}

Matrix encode_means(const ClvmModel& model, const data::DatasetSplit& dataset, std::size_t chunk) {
    if (chunk == 0) chunk = 1;
    Matrix out(dataset.size(), model.config.latent_dim);
    for (std::size_t begin = 0; begin < dataset.size(); begin += chunk) {
        const std::size_t b = std::min(chunk, dataset.size() - begin);
        const dist::GaussianParams q =
            encode(model, take_rows(dataset.conditions, begin, b), take_rows(dataset.targets, begin, b));
        std::copy(q.mean.data.begin(), q.mean.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(begin * out.cols));
    }
    return out;
}

NnProfile nn_profile(const Matrix& encoded, std::span<const Matrix> means_per_condition, std::span<const double> radii) {
    if (encoded.rows == 0) throw ContractError("nn_profile: empty encoded set");
    if (means_per_condition.empty()) throw ContractError("nn_profile: no evaluation conditions");
    if (radii.empty()) throw ContractError("nn_profile: no radii");
    for (std::size_t r = 0; r < radii.size(); ++r) {
        if (!(radii[r] >= 0.0)) throw ContractError("nn_profile: radii must be non-negative");
        if (r > 0 && !(radii[r] > radii[r - 1])) throw ContractError("nn_profile: radii must be increasing");
    }
    const std::size_t k = means_per_condition.front().rows;
    NnProfile profile;
    profile.radii.assign(radii.begin(), radii.end());
    profile.counts.assign(k, std::vector<double>(radii.size(), 0.0));

    std::vector<double> dist(encoded.rows);
    for (const Matrix& means : means_per_condition) {
        if (means.rows != k || means.cols != encoded.cols)
            throw ContractError("nn_profile: component means have inconsistent shapes");
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < encoded.rows; ++i) dist[i] = distance(encoded.row(i), means.row(c));
            std::sort(dist.begin(), dist.end());
            for (std::size_t r = 0; r < radii.size(); ++r) {
                const auto within = std::upper_bound(dist.begin(), dist.end(), radii[r]) - dist.begin();
                profile.counts[c][r] += static_cast<double>(within);
            }
        }
    }
    const double m = static_cast<double>(means_per_condition.size());
    for (auto& curve : profile.counts)
        for (double& v : curve) v /= m;
    return profile;
}

NnProfile component_nn_profile(const ClvmModel& model, const data::DatasetSplit& dataset,
                               const Matrix& eval_conditions, std::span<const double> radii) {
    if (dataset.size() == 0) throw ContractError("component_nn_profile: empty dataset");
    const Matrix encoded = encode_means(model, dataset);
    const std::vector<Matrix> means = component_means(model, eval_conditions);
    return nn_profile(encoded, means, radii);
}

// ---------------------------------------------------------------------------

double gap_mass(const TargetGenerator& generator, std::span<const double> conditions, const data::ToySpec& spec,
                std::size_t n, std::uint64_t seed) {
    if (n == 0) throw ContractError("gap_mass: n must be at least 1");
    if (conditions.empty()) throw ContractError("gap_mass: no conditions");
    const double band = kGapSigmas * spec.sigma;
    std::size_t in_gap = 0;
    for (std::size_t i = 0; i < conditions.size(); ++i) {
        const data::ToyInterval* interval = spec.find_interval(conditions[i]);
        if (interval == nullptr)
            throw ContractError("gap_mass: condition " + std::to_string(conditions[i]) + " lies outside every interval");
        if (interval->modes.size() < 2)
            throw ContractError("gap_mass: condition " + std::to_string(conditions[i]) +
                                " lies in an interval with fewer than two modes");
        const Matrix samples = generator(Matrix(1, 1, conditions[i]), n, mix_seed(seed, i));
        for (double y : samples.data) {
            const bool near = std::any_of(interval->modes.begin(), interval->modes.end(),
                                          [&](double mode) { return std::abs(y - mode) <= band; });
            if (!near) ++in_gap;
        }
    }
    return static_cast<double>(in_gap) / static_cast<double>(conditions.size() * n);
}

std::size_t count_clusters(const Matrix& points, double threshold) {
    std::vector<std::size_t> parent(points.rows);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < points.rows; ++i)
        for (std::size_t j = i + 1; j < points.rows; ++j)
            if (distance(points.row(i), points.row(j)) < threshold) parent[find(i)] = find(j);
    std::size_t clusters = 0;
    for (std::size_t i = 0; i < points.rows; ++i)
        if (find(i) == i) ++clusters;
    return clusters;
}

}  // namespace cvae::eval
