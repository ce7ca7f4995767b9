#pragma once

#include <filesystem>
#include <iosfwd>

#include "cvae/model.hpp"

namespace cvae {

// A checkpoint is "<stem>.params" (parameter container) plus "<stem>.meta",
// a key = value sidecar with the model structure.
void save_checkpoint(const std::filesystem::path& stem, const ClvmModel& model);
ClvmModel load_checkpoint(const std::filesystem::path& stem);

void write_model_metadata(std::ostream& out, const ModelConfig& cfg);
ModelConfig read_model_metadata(std::istream& in);

}  // namespace cvae
