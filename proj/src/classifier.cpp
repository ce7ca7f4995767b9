#include <algorithm>
#include <numeric>
#include <random>

#include "cvae/eval.hpp"
#include "cvae/random.hpp"

namespace cvae::eval {

namespace {

constexpr std::string_view kPrefix = "classifier";

Matrix one_hot(std::span<const std::uint8_t> labels, std::span<const std::size_t> idx, std::size_t classes) {
    Matrix out(idx.size(), classes);
    for (std::size_t i = 0; i < idx.size(); ++i) out(i, labels[idx[i]]) = 1.0;
    return out;
}

// Mean log-softmax probability of the true class.
ad::Var log_likelihood(const Classifier& c, const ad::VarMap& p, ad::Var inputs, ad::Var targets) {
    const ad::Var logits = nn::mlp_apply(c.spec, kPrefix, p, inputs);
    const ad::Var norm = ad::broadcast(ad::logsumexp_rows(logits), logits.rows(), logits.cols());
    return ad::scale(ad::sum(targets * (logits - norm)), 1.0 / static_cast<double>(inputs.rows()));
}

}  // namespace

Matrix Classifier::predict_proba(const Matrix& inputs) const {
    Matrix logits = nn::mlp_apply(spec, kPrefix, params, inputs);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        auto row = logits.row(r);
        const double top = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double& v : row) total += (v = std::exp(v - top));
        for (double& v : row) v /= total;
    }
    return logits;
}

std::vector<std::size_t> Classifier::predict(const Matrix& inputs) const {
    const Matrix probs = predict_proba(inputs);
    std::vector<std::size_t> out(probs.rows);
    for (std::size_t r = 0; r < probs.rows; ++r) {
        const auto row = probs.row(r);
        out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    return out;
}

double accuracy(const Classifier& c, const Matrix& inputs, std::span<const std::uint8_t> labels) {
    if (inputs.rows != labels.size()) throw ContractError("accuracy: input and label counts differ");
    if (labels.empty()) return 0.0;
    const auto pred = c.predict(inputs);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Classifier train_classifier(const Matrix& inputs, std::span<const std::uint8_t> labels, const Matrix& heldout_inputs,
                            std::span<const std::uint8_t> heldout_labels, const ClassifierConfig& cfg) {
    if (inputs.rows != labels.size() || inputs.rows == 0)
        throw ContractError("train_classifier: need matching, non-empty inputs and labels");
    if (cfg.batch_size == 0 || cfg.classes < 2) throw ContractError("train_classifier: bad configuration");
    for (auto l : labels)
        if (l >= cfg.classes) throw ContractError("train_classifier: label out of range");
    cfg.adam.validate();

    Classifier c;
    c.spec.sizes.push_back(inputs.cols);
    c.spec.sizes.insert(c.spec.sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    c.spec.sizes.push_back(cfg.classes);
    c.spec.hidden = nn::Activation::Tanh;
    c.params = nn::mlp_init(c.spec, mix_seed(cfg.seed, 0), kPrefix);
    nn::AdamState adam = nn::AdamState::zeros_like(c.params);

    std::vector<std::size_t> order(inputs.rows);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(mix_seed(cfg.seed, epoch + 1));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, order.size() - begin);
            const std::span<const std::size_t> idx(order.data() + begin, b);
            ad::Tape tape;
            const ad::VarMap vars = ad::bind(tape, c.params);
            const ad::Var out = log_likelihood(c, vars, tape.constant(gather_rows(inputs, idx)),
                                               tape.constant(one_hot(labels, idx, cfg.classes)));
            tape.backward(out);
            nn::adam_step(adam, c.params, ad::gradients(tape, vars), cfg.adam);
        }
    }
    if (heldout_inputs.rows > 0) c.heldout_accuracy = accuracy(c, heldout_inputs, heldout_labels);
    return c;
}

}  // namespace cvae::eval
