#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "cvae/config.hpp"
#include "cvae/svg.hpp"

namespace cvae::cli {

enum ExitCode : int { kSuccess = 0, kUserError = 1, kNumericalFailure = 2 };

struct ExperimentData {
    data::DatasetSplit train;
    data::DatasetSplit test;
    // Full binary images and labels, MNIST only.
    Matrix train_images;
    Matrix test_images;
    std::vector<std::uint8_t> train_labels;
    std::vector<std::uint8_t> test_labels;

    const data::DatasetSplit& split(const std::string& name) const { return name == "test" ? test : train; }
};

ExperimentData load_data(const config::ExperimentConfig& cfg);

// Checkpoint stem used when none is given: <experiment_dir>/model.
std::filesystem::path default_checkpoint(const config::ExperimentConfig& cfg);
std::filesystem::path metric_path(const config::ExperimentConfig& cfg, std::string_view metric);

// Each command writes its artifacts and returns an exit code. Errors are
// reported on `log`; user errors map to 1 and numerical failures to 2.
int cmd_train(const config::ExperimentConfig& cfg, std::ostream& log);
int cmd_eval(const config::ExperimentConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);
int cmd_generate(const config::ExperimentConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& log);
int cmd_plot(svg::FigureKind kind, const std::vector<std::filesystem::path>& inputs,
             const std::filesystem::path& output, const svg::PlotOptions& options, std::ostream& log);

// Runs `body`, mapping exceptions to exit codes and messages on `log`.
int guarded(const std::function<int()>& body, std::ostream& log);

// Keeps large tape buffers on the heap between steps instead of returning
// them to the kernel each time (glibc only; a no-op elsewhere).
void tune_allocator();

}  // namespace cvae::cli
