// Command-line driver: train, eval, generate, plot.

#include <iostream>

#include <CLI11.hpp>

#include "cvae/commands.hpp"

namespace {

using cvae::cli::guarded;

cvae::config::ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    auto cfg = path.empty() ? cvae::config::ExperimentConfig{} : cvae::config::load(path);
    for (const auto& o : overrides) cvae::config::apply_override(cfg, o);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    cvae::cli::tune_allocator();
    CLI::App app{"Conditional latent-variable models with structured priors"};
    app.require_subcommand(1);

    std::string config_path, checkpoint;
    std::vector<std::string> overrides;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Experiment config file");
        cmd->add_option("--set", overrides, "Override, section.key=value (repeatable)");
    };

    auto* train = app.add_subcommand("train", "Train a model and write history.csv and the checkpoint");
    add_common(train);
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write one CSV per metric");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint stem (default <output>/<name>/model)");
    auto* generate = app.add_subcommand("generate", "Write generated samples as CSV");
    add_common(generate);
    generate->add_option("--checkpoint", checkpoint, "Checkpoint stem (default <output>/<name>/model)");

    auto* plot = app.add_subcommand("plot", "Render CSV files as an SVG figure");
    add_common(plot);
    std::string kind, output;
    std::vector<std::string> inputs;
    cvae::svg::PlotOptions options;
    plot->add_option("--kind", kind, "scatter, line, box or latent-field")->required();
    plot->add_option("--input", inputs, "CSV input (repeatable; one series each)")->required();
    plot->add_option("--output", output, "SVG output path")->required();
    plot->add_option("--title", options.title, "Figure title");
    plot->add_option("--x", options.x_column, "Scatter: horizontal column");
    plot->add_option("--y", options.y_column, "Scatter: vertical column");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : cvae::cli::kUserError;
    }

    cvae::config::ExperimentConfig cfg;
    if (!plot->parsed()) {
        const int status = guarded(
            [&] {
                cfg = load_config(config_path, overrides);
                return int{cvae::cli::kSuccess};
            },
            std::cerr);
        if (status != 0) return status;
    }

    if (train->parsed()) return cvae::cli::cmd_train(cfg, std::cerr);
    if (eval->parsed()) return cvae::cli::cmd_eval(cfg, checkpoint, std::cerr);
    if (generate->parsed()) return cvae::cli::cmd_generate(cfg, checkpoint, std::cerr);
    return guarded(
        [&] {
            std::vector<std::filesystem::path> paths(inputs.begin(), inputs.end());
            return cvae::cli::cmd_plot(cvae::svg::figure_kind_from_string(kind), paths, output, options, std::cerr);
        },
        std::cerr);
}
