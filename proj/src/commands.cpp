#include "cvae/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "cvae/checkpoint.hpp"
#include "cvae/csv.hpp"
#include "cvae/eval.hpp"
#include "cvae/random.hpp"
#include "cvae/train.hpp"

namespace cvae::cli {

namespace fs = std::filesystem;
using config::DatasetKind;
using config::ExperimentConfig;

namespace {

void write_history(const fs::path& path, const std::vector<ElboEstimate>& history) {
    csv::Table t;
    t.header = {"epoch", "elbo", "reconstruction", "kl"};
    for (std::size_t e = 0; e < history.size(); ++e)
        t.rows.push_back({static_cast<double>(e + 1), history[e].total, history[e].reconstruction,
                          -history[e].prior_minus_posterior});
    csv::save_table(path, t);
}

class UnsupportedMetric : public ContractError {
public:
    using ContractError::ContractError;
};

std::vector<double> default_gap_conditions(const data::ToySpec& spec) {
    std::vector<double> out;
    for (const auto& interval : spec.intervals) {
        if (interval.modes.size() < 2) continue;
        for (int i = 0; i < 10; ++i) out.push_back(interval.low + (i + 0.5) * (interval.high - interval.low) / 10.0);
    }
    return out;
}

csv::Table elbo_metric(const ExperimentConfig& cfg, const ClvmModel& model, const data::DatasetSplit& split) {
    const ElboEstimate e = estimate_elbo(model, split, cfg.eval.samples, cfg.eval_seed());
    return {{"elbo", "reconstruction", "kl", "samples"},
            {{e.total, e.reconstruction, -e.prior_minus_posterior, static_cast<double>(cfg.eval.samples)}}};
}

csv::Table nn_profile_metric(const ExperimentConfig& cfg, const ClvmModel& model, const data::DatasetSplit& split) {
    const std::size_t n = std::min(cfg.eval.profile_conditions, split.size());
    const eval::NnProfile p =
        eval::component_nn_profile(model, split, take_rows(split.conditions, 0, n), cfg.eval.radii);
    csv::Table t{{"component", "radius", "count"}, {}};
    for (std::size_t k = 0; k < p.counts.size(); ++k)
        for (std::size_t r = 0; r < p.radii.size(); ++r)
            t.rows.push_back({static_cast<double>(k), p.radii[r], p.counts[k][r]});
    return t;
}

csv::Table gap_mass_metric(const ExperimentConfig& cfg, const ClvmModel& model) {
    if (cfg.dataset.kind != DatasetKind::Toy)
        throw UnsupportedMetric("metric 'gap-mass' applies only to the toy dataset, not " +
                                std::string(config::to_string(cfg.dataset.kind)));
    const auto conditions =
        cfg.eval.gap_conditions.empty() ? default_gap_conditions(cfg.dataset.toy) : cfg.eval.gap_conditions;
    const double g = eval::gap_mass(eval::model_generator(model), conditions, cfg.dataset.toy, cfg.eval.gap_samples,
                                    cfg.eval_seed());
    return {{"gap_mass", "conditions", "samples"},
            {{g, static_cast<double>(conditions.size()), static_cast<double>(cfg.eval.gap_samples)}}};
}

csv::Table mf_grid_metric(const ExperimentConfig& cfg, const ClvmModel& model, const data::DatasetSplit& split) {
    if (model.config.latent_dim != 2)
        throw UnsupportedMetric("metric 'mf-grid' needs a 2-D latent space, model has " +
                                std::to_string(model.config.latent_dim));
    const auto cells =
        eval::magnification_grid(model, take_rows(split.conditions, 0, 1), cfg.eval.mf_low, cfg.eval.mf_high,
                                 cfg.eval.mf_steps);
    csv::Table t{{"z0", "z1", "mf"}, {}};
    for (const auto& c : cells) t.rows.push_back({c.z0, c.z1, c.value});
    return t;
}

csv::Table variety_metric(const ExperimentConfig& cfg, const ClvmModel& model, const ExperimentData& d,
                          std::ostream& log) {
    if (cfg.dataset.kind != DatasetKind::Mnist)
        throw UnsupportedMetric("metric 'variety' applies only to the mnist dataset");
    eval::ClassifierConfig cc;
    cc.hidden = cfg.eval.classifier_hidden;
    cc.epochs = cfg.eval.classifier_epochs;
    cc.seed = mix_seed(cfg.eval_seed(), 1);
    const eval::Classifier classifier =
        eval::train_classifier(d.train_images, d.train_labels, d.test_images, d.test_labels, cc);
    log << "classifier held-out accuracy " << classifier.heldout_accuracy << '\n';
    const std::size_t n = std::min(cfg.eval.variety_conditions, d.test.size());
    const auto report = eval::variety_score(
        eval::model_generator(model), [&](const Matrix& in) { return classifier.predict_proba(in); },
        take_rows(d.test.conditions, 0, n), eval::assemble_images, cfg.eval.variety_samples, cfg.eval.threshold,
        cfg.eval_seed());
    log << "confident fraction " << report.confident_fraction << '\n';
    csv::save_table(metric_path(cfg, "classifier"),
                    {{"heldout_accuracy", "confident_fraction"}, {{classifier.heldout_accuracy, report.confident_fraction}}});
    csv::Table t{{"condition", "count"}, {}};
    for (std::size_t i = 0; i < report.counts.size(); ++i)
        t.rows.push_back({static_cast<double>(i), static_cast<double>(report.counts[i])});
    return t;
}

}  // namespace

ExperimentData load_data(const ExperimentConfig& cfg) {
    ExperimentData d;
    switch (cfg.dataset.kind) {
        case DatasetKind::Toy:
            d.train = data::gen_toy_structured(cfg.dataset.toy, mix_seed(cfg.data_seed(), 0));
            d.test = data::gen_toy_structured(cfg.dataset.toy, mix_seed(cfg.data_seed(), 1));
            break;
        case DatasetKind::FourGaussians:
            d.train = data::gen_four_gaussians(cfg.dataset.points, mix_seed(cfg.data_seed(), 0));
            d.test = data::gen_four_gaussians(cfg.dataset.points, mix_seed(cfg.data_seed(), 1));
            break;
        case DatasetKind::Mnist: {
            const fs::path dir = cfg.mnist_path();
            const auto train_images = data::load_idx(dir / "train-images-idx3-ubyte");
            const auto test_images = data::load_idx(dir / "t10k-images-idx3-ubyte");
            auto train_labels = data::load_idx_labels(dir / "train-labels-idx1-ubyte");
            auto test_labels = data::load_idx_labels(dir / "t10k-labels-idx1-ubyte");
            const std::size_t ntrain = cfg.dataset.train_count, ntest = cfg.dataset.test_count;
            if (train_images.count < ntrain || test_images.count < ntest || train_labels.size() < ntrain ||
                test_labels.size() < ntest)
                throw ContractError("mnist: " + dir.string() + " holds fewer images than requested");
            d.train_images = data::binarize(train_images.subset(0, ntrain), cfg.dataset.threshold,
                                            mix_seed(cfg.data_seed(), 0), cfg.dataset.binarize);
            d.test_images = data::binarize(test_images.subset(0, ntest), cfg.dataset.threshold,
                                           mix_seed(cfg.data_seed(), 1), cfg.dataset.binarize);
            train_labels.resize(ntrain);
            test_labels.resize(ntest);
            d.train_labels = std::move(train_labels);
            d.test_labels = std::move(test_labels);
            d.train = data::make_completion_split(d.train_images, "train");
            d.test = data::make_completion_split(d.test_images, "test");
            break;
        }
    }
    return d;
}

fs::path default_checkpoint(const ExperimentConfig& cfg) { return cfg.experiment_dir() / "model"; }

fs::path metric_path(const ExperimentConfig& cfg, std::string_view metric) {
    return cfg.experiment_dir() / (cfg.name + "_" + std::string(metric) + ".csv");
}

int guarded(const std::function<int()>& body, std::ostream& log) {
    try {
        return body();
    } catch (const NumericalError& e) {
        log << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const FormatError& e) {
        log << "format error: " << e.what() << '\n';
        return kUserError;
    } catch (const ContractError& e) {
        log << "error: " << e.what() << '\n';
        return kUserError;
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << '\n';
        return kUserError;
    }
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    return guarded(
        [&] {
            const ExperimentData d = load_data(cfg);
            const ModelConfig mc = cfg.model_config(d.train.condition_dim(), d.train.target_dim());
            ClvmModel model = ClvmModel::create(mc, cfg.init_seed(), d.train.targets);
            TrainConfig tc = cfg.train;
            tc.seed = cfg.train_seed();
            const fs::path dir = cfg.experiment_dir();
            fs::create_directories(dir);
            log << "training " << cfg.name << ": " << d.train.size() << " pairs, prior " << to_string(mc.prior)
                << ", " << tc.epochs << " epochs\n";
            try {
                const TrainResult result = train(std::move(model), d.train, tc, [&](std::size_t epoch, const ElboEstimate& e) {
                    log << "epoch " << epoch + 1 << " elbo " << e.total << '\n';
                });
                write_history(dir / "history.csv", result.history);
                save_checkpoint(default_checkpoint(cfg), result.model);
            } catch (const TrainingFailure& f) {
                write_history(dir / "history.csv", f.history());
                save_checkpoint(default_checkpoint(cfg), f.last_good());
                log << "numerical failure in epoch " << f.epoch() + 1 << ", batch " << f.batch_index()
                    << "; kept the checkpoint of the last completed epoch: " << f.what() << '\n';
                return int{kNumericalFailure};
            }
            return int{kSuccess};
        },
        log);
}

int cmd_eval(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
    return guarded(
        [&] {
            const ClvmModel model = load_checkpoint(checkpoint.empty() ? default_checkpoint(cfg) : checkpoint);
            const ExperimentData d = load_data(cfg);
            const data::DatasetSplit& split = d.split(cfg.eval.split);
            fs::create_directories(cfg.experiment_dir());
            for (const auto& metric : cfg.eval.metrics) {
                csv::Table table;
                try {
                    if (metric == "elbo") table = elbo_metric(cfg, model, split);
                    else if (metric == "nn-profile") table = nn_profile_metric(cfg, model, split);
                    else if (metric == "gap-mass") table = gap_mass_metric(cfg, model);
                    else if (metric == "mf-grid") table = mf_grid_metric(cfg, model, split);
                    else if (metric == "variety") table = variety_metric(cfg, model, d, log);
                    else throw UnsupportedMetric("unknown metric '" + metric + "'");
                } catch (const UnsupportedMetric& e) {
                    log << "error: " << e.what() << '\n';
                    return int{kUserError};
                }
                const fs::path out = metric_path(cfg, metric);
                csv::save_table(out, table);
                log << "wrote " << out.string() << '\n';
            }
            return int{kSuccess};
        },
        log);
}

int cmd_generate(const ExperimentConfig& cfg, const fs::path& checkpoint, std::ostream& log) {
    return guarded(
        [&] {
            const ClvmModel model = load_checkpoint(checkpoint.empty() ? default_checkpoint(cfg) : checkpoint);
            Matrix conditions;
            switch (cfg.dataset.kind) {
                case DatasetKind::Toy: {
                    const auto& iv = cfg.dataset.toy.intervals;
                    const double lo = iv.front().low, hi = iv.back().high;
                    const std::size_t n = cfg.eval.generate_conditions;
                    conditions = Matrix(n, 1);
                    for (std::size_t i = 0; i < n; ++i)
                        conditions(i, 0) = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
                    break;
                }
                case DatasetKind::FourGaussians: conditions = Matrix(1, 1, 0.0); break;
                case DatasetKind::Mnist: {
                    const ExperimentData d = load_data(cfg);
                    conditions = take_rows(d.test.conditions, 0, std::min(cfg.eval.generate_conditions, d.test.size()));
                    break;
                }
            }
            csv::Table t;
            for (std::size_t j = 0; j < model.config.condition_dim; ++j) t.header.push_back("x" + std::to_string(j));
            for (std::size_t j = 0; j < model.config.target_dim; ++j) t.header.push_back("y" + std::to_string(j));
            for (std::size_t i = 0; i < conditions.rows; ++i) {
                const Matrix x = take_rows(conditions, i, 1);
                const Matrix y = eval::generate(model, x, cfg.eval.generate_samples, mix_seed(cfg.eval_seed(), i));
                for (std::size_t s = 0; s < y.rows; ++s) {
                    std::vector<double> row(x.data);
                    row.insert(row.end(), y.row(s).begin(), y.row(s).end());
                    t.rows.push_back(std::move(row));
                }
            }
            fs::create_directories(cfg.experiment_dir());
            const fs::path out = metric_path(cfg, "samples");
            csv::save_table(out, t);
            log << "wrote " << out.string() << '\n';
            return int{kSuccess};
        },
        log);
}

int cmd_plot(svg::FigureKind kind, const std::vector<fs::path>& inputs, const fs::path& output,
             const svg::PlotOptions& options, std::ostream& log) {
    return guarded(
        [&] {
            std::vector<svg::Series> series;
            for (const auto& in : inputs) series.push_back({in.stem().string(), csv::load_table(in)});
            const std::string svg = svg::render(kind, series, options);
            if (output.has_parent_path()) fs::create_directories(output.parent_path());
            std::ofstream out(output, std::ios::binary);
            if (!out) throw ContractError("cannot write " + output.string());
            out << svg;
            if (!out) throw ContractError("failed writing " + output.string());
            log << "wrote " << output.string() << '\n';
            return int{kSuccess};
        },
        log);
}

void tune_allocator() {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace cvae::cli
