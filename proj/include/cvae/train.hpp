#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cvae/data.hpp"
#include "cvae/model.hpp"
#include "cvae/nn.hpp"

namespace cvae {

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 128;
    nn::AdamConfig adam;
    std::size_t samples = 1;          // Monte-Carlo draws per datum per step
    std::size_t history_samples = 1;  // draws per datum for the per-epoch ELBO
    std::uint64_t seed = 0;

    void validate() const;
    // KL weight ramps linearly to 1 over the optimizer steps of the first epoch.
    std::size_t annealing_steps(std::size_t dataset_size) const;
};

struct TrainResult {
    ClvmModel model;
    std::vector<ElboEstimate> history;  // full-data ELBO at beta = 1 after each epoch
};

// Thrown when a step produces a non-finite value. Carries the parameters as
// they were at the end of the last completed epoch.
class TrainingFailure : public NumericalError {
public:
    TrainingFailure(const NumericalError& cause, ClvmModel last_good, std::vector<ElboEstimate> history,
                    std::size_t epoch, std::size_t batch_index);

    const ClvmModel& last_good() const { return last_good_; }
    const std::vector<ElboEstimate>& history() const { return history_; }
    std::size_t epoch() const { return epoch_; }
    std::size_t batch_index() const { return batch_index_; }

private:
    ClvmModel last_good_;
    std::vector<ElboEstimate> history_;
    std::size_t epoch_;
    std::size_t batch_index_;
};

using EpochCallback = std::function<void(std::size_t epoch, const ElboEstimate& elbo)>;

TrainResult train(ClvmModel model, const data::DatasetSplit& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// One Adam ascent step on the mean minibatch ELBO. Returns the batch ELBO
// before the update.
double train_step(ClvmModel& model, nn::AdamState& adam, const Matrix& x, const Matrix& y, const Matrix& noise,
                  std::size_t samples, double beta, const nn::AdamConfig& cfg);

}  // namespace cvae
