#include "cvae/train.hpp"

#include <algorithm>
#include <numeric>

#include "cvae/random.hpp"

namespace cvae {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ContractError("TrainConfig: batch size must be positive");
    if (samples == 0 || history_samples == 0) throw ContractError("TrainConfig: sample counts must be positive");
    adam.validate();
}

std::size_t TrainConfig::annealing_steps(std::size_t dataset_size) const {
    return (dataset_size + batch_size - 1) / batch_size;
}

TrainingFailure::TrainingFailure(const NumericalError& cause, ClvmModel last_good, std::vector<ElboEstimate> history,
                                 std::size_t epoch, std::size_t batch_index)
    : NumericalError("training failed in epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index) +
                         ": " + cause.what(),
                     cause.op_id(), cause.op_name()),
      last_good_(std::move(last_good)),
      history_(std::move(history)),
      epoch_(epoch),
      batch_index_(batch_index) {}

double train_step(ClvmModel& model, nn::AdamState& adam, const Matrix& x, const Matrix& y, const Matrix& noise,
                  std::size_t samples, double beta, const nn::AdamConfig& cfg) {
    ad::Tape tape;
    const ad::VarMap vars = ad::bind(tape, model.params);
    const ElboTerms terms = elbo(model, vars, tape.constant(x), tape.constant(y), tape.constant(noise), samples, beta);
    const ad::Var objective = ad::mean(terms.total);
    tape.backward(objective);
    nn::adam_step(adam, model.params, ad::gradients(tape, vars), cfg);
    return objective.value().data[0];
}

TrainResult train(ClvmModel model, const data::DatasetSplit& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    dataset.validate();
    if (dataset.size() == 0) throw ContractError("train: empty dataset");

    TrainResult result{std::move(model), {}};
    if (cfg.epochs == 0) return result;

    ClvmModel& m = result.model;
    nn::AdamState adam = nn::AdamState::zeros_like(m.params);
    const std::size_t n = dataset.size();
    const std::size_t anneal = cfg.annealing_steps(n);
    std::vector<std::size_t> order(n);
    std::size_t global_step = 0;
    ParameterSet last_good = m.params;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(cfg.seed, 2 * epoch));
        Rng noise_rng(mix_seed(cfg.seed, 2 * epoch + 1));
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        std::size_t batch_index = 0;
        try {
            for (std::size_t begin = 0; begin < n; begin += cfg.batch_size, ++batch_index, ++global_step) {
                const std::size_t b = std::min(cfg.batch_size, n - begin);
                const std::span<const std::size_t> idx(order.data() + begin, b);
                const double beta =
                    std::min(1.0, static_cast<double>(global_step) / static_cast<double>(anneal));
                const Matrix noise = standard_normal(cfg.samples * b, m.config.latent_dim, noise_rng);
                train_step(m, adam, gather_rows(dataset.conditions, idx), gather_rows(dataset.targets, idx), noise,
                           cfg.samples, beta, cfg.adam);
            }
            const ElboEstimate e = estimate_elbo(m, dataset, cfg.history_samples, mix_seed(cfg.seed, 1'000'000 + epoch));
            result.history.push_back(e);
            if (on_epoch) on_epoch(epoch, e);
        } catch (const NumericalError& err) {
            ClvmModel good = m;
            good.params = last_good;
            throw TrainingFailure(err, std::move(good), result.history, epoch, batch_index);
        }
        last_good = m.params;
    }
    return result;
}

}  // namespace cvae
