#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cvae/data.hpp"
#include "cvae/model.hpp"
#include "cvae/nn.hpp"

namespace cvae::eval {

using cvae::estimate_elbo;

enum class GenerateMode {
    Sample,  // draw y from the likelihood
    Mean,    // return the likelihood mean (noise-free decoding)
};

// n targets for one condition row: component k uniform, z from component k
// of the prior, y from the likelihood at decode(z, x).
Matrix generate(const ClvmModel& model, const Matrix& condition, std::size_t n, std::uint64_t seed,
                GenerateMode mode = GenerateMode::Sample);

// Produces n targets for a condition row; deterministic in seed.
using TargetGenerator = std::function<Matrix(const Matrix& condition, std::size_t n, std::uint64_t seed)>;
TargetGenerator model_generator(const ClvmModel& model, GenerateMode mode = GenerateMode::Sample);

// sqrt(det(JᵀJ)) for J the Jacobian of g at z.
double magnification_factor(const ad::VectorFunction& g, std::span<const double> z);
// Same for the decoder mean of the model with respect to z at condition x.
double magnification_factor(const ClvmModel& model, std::span<const double> z, const Matrix& condition);

struct FieldCell {
    double z0 = 0.0;
    double z1 = 0.0;
    double value = 0.0;
};

// MF over a steps × steps grid spanning [lo, hi]² (2-D latents only).
std::vector<FieldCell> magnification_grid(const ClvmModel& model, const Matrix& condition, double lo, double hi,
                                          std::size_t steps);

// ---------------------------------------------------------------------------
// Classifier used for the variety metric.

struct ClassifierConfig {
    std::vector<std::size_t> hidden = {256};
    std::size_t classes = 10;
    std::size_t epochs = 10;
    std::size_t batch_size = 128;
    nn::AdamConfig adam;
    std::uint64_t seed = 0;
};

struct Classifier {
    nn::MlpSpec spec;
    ParameterSet params;
    double heldout_accuracy = 0.0;

    // Softmax class probabilities, one row per input row.
    Matrix predict_proba(const Matrix& inputs) const;
    std::vector<std::size_t> predict(const Matrix& inputs) const;
};

Classifier train_classifier(const Matrix& inputs, std::span<const std::uint8_t> labels, const Matrix& heldout_inputs,
                            std::span<const std::uint8_t> heldout_labels, const ClassifierConfig& cfg);

double accuracy(const Classifier& c, const Matrix& inputs, std::span<const std::uint8_t> labels);

// ---------------------------------------------------------------------------

struct VarietyReport {
    std::vector<std::size_t> counts;  // distinct confident classes per condition
    double confident_fraction = 0.0;  // kept predictions / all predictions
};

using ClassProbabilities = std::function<Matrix(const Matrix& inputs)>;
// Joins n generated targets with their condition into classifier inputs.
using Assembler = std::function<Matrix(const Matrix& targets, const Matrix& condition)>;

// Image assembler for the completion task: target rows on top, condition below.
Matrix assemble_images(const Matrix& targets, const Matrix& condition);

VarietyReport variety_score(const TargetGenerator& generator, const ClassProbabilities& classify,
                            const Matrix& conditions, const Assembler& assemble, std::size_t n, double threshold,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------

struct NnProfile {
    std::vector<double> radii;
    // counts[k][r]: encoded points within radii[r] of component k's mean,
    // averaged over the evaluation conditions.
    std::vector<std::vector<double>> counts;
};

// Component means per condition: entry i is K × N_z for condition row i.
std::vector<Matrix> component_means(const ClvmModel& model, const Matrix& conditions);
// Posterior means of every (condition, target) pair.
Matrix encode_means(const ClvmModel& model, const data::DatasetSplit& dataset, std::size_t chunk = 512);

NnProfile nn_profile(const Matrix& encoded, std::span<const Matrix> means_per_condition, std::span<const double> radii);
NnProfile component_nn_profile(const ClvmModel& model, const data::DatasetSplit& dataset,
                               const Matrix& eval_conditions, std::span<const double> radii);

// ---------------------------------------------------------------------------

// Fraction of generated targets farther than 4 sigma from every mode center
// of their condition's interval.
double gap_mass(const TargetGenerator& generator, std::span<const double> conditions, const data::ToySpec& spec,
                std::size_t n, std::uint64_t seed);
inline constexpr double kGapSigmas = 4.0;

// Number of single-linkage clusters among the rows of `points` when rows
// closer than `distance` are joined.
std::size_t count_clusters(const Matrix& points, double distance);

}  // namespace cvae::eval
