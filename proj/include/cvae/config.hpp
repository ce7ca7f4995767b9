#pragma once

// Experiment configuration: a flat "key = value" file with [section] headers.
//
//   name = toy_cdv
//   seed = 1
//   [model]
//   prior = cdv
//
// Lines starting with '#' or ';' are comments. Every key has a default (see
// README); unknown sections or keys are errors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cvae/data.hpp"
#include "cvae/errors.hpp"
#include "cvae/model.hpp"
#include "cvae/train.hpp"

namespace cvae::config {

class ConfigError : public ContractError {
public:
    ConfigError(const std::string& source, std::size_t line, const std::string& field, const std::string& message);

    std::size_t line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    std::size_t line_;
    std::string field_;
};

enum class DatasetKind { Toy, FourGaussians, Mnist };
std::string_view to_string(DatasetKind k);

struct DatasetSettings {
    DatasetKind kind = DatasetKind::Toy;
    data::ToySpec toy = data::ToySpec::default_spec();
    std::size_t points = 1000;  // four-gaussians
    std::string mnist_dir;      // empty: $CVAE_MNIST_DIR, then the build-time default
    std::size_t train_count = 8000;
    std::size_t test_count = 1000;
    double threshold = 0.5;
    data::BinarizeMode binarize = data::BinarizeMode::Fixed;
};

struct ModelSettings {
    std::size_t latent_dim = 2;
    PriorKind prior = PriorKind::Cdv;
    std::size_t k = 8;
    std::vector<std::size_t> hidden = {64, 64};
    nn::Activation activation = nn::Activation::Tanh;
    std::string likelihood = "auto";  // gaussian for toy data, bernoulli for images
    DecoderConditioning decoder = DecoderConditioning::LatentOnly;
    KlEstimator kl = KlEstimator::MonteCarlo;
    double decoder_log_var_init = -4.0;
};

struct EvalSettings {
    std::size_t samples = 100;  // S for the ELBO estimate
    std::vector<std::string> metrics = {"elbo"};
    std::string split = "train";
    std::vector<double> radii = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::size_t profile_conditions = 64;
    double threshold = 0.9;
    std::size_t variety_samples = 10;
    std::size_t variety_conditions = 1000;
    std::size_t classifier_epochs = 10;
    std::vector<std::size_t> classifier_hidden = {256};
    std::vector<double> gap_conditions;  // empty: 10 evenly spaced points in every multi-mode interval
    std::size_t gap_samples = 1000;
    double mf_low = -3.0;
    double mf_high = 3.0;
    std::size_t mf_steps = 50;
    std::size_t generate_samples = 1000;
    std::size_t generate_conditions = 200;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::string output_dir = "runs";
    std::uint64_t seed = 0;
    DatasetSettings dataset;
    ModelSettings model;
    TrainConfig train;
    EvalSettings eval;

    // Master seed split into independent streams.
    std::uint64_t data_seed() const;
    std::uint64_t init_seed() const;
    std::uint64_t train_seed() const;
    std::uint64_t eval_seed() const;

    // Output root: $CVAE_OUTPUT_ROOT if set, else output_dir; runs land in
    // <root>/<name>.
    std::filesystem::path experiment_dir() const;
    std::filesystem::path mnist_path() const;

    ModelConfig model_config(std::size_t condition_dim, std::size_t target_dim) const;
};

ExperimentConfig parse(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load(const std::filesystem::path& path);
// Applies "section.key=value" (or "key=value" for top-level keys).
void apply_override(ExperimentConfig& cfg, std::string_view assignment);
// Every accepted key as "section.key".
std::vector<std::string> known_keys();

}  // namespace cvae::config
