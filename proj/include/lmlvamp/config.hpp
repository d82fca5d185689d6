#pragma once

#include <filesystem>
#include <string>

#include "lmlvamp/experiment.hpp"

namespace lmlvamp::harness {

// Reads a TOML-style file: [section] headers, `key = value` lines, values
// being numbers, booleans, quoted strings or flat arrays of those. Unknown
// sections or keys are errors. Keys left out keep their defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// LMLVAMP_OUTPUT_DIR, when set, replaces output_dir.
void apply_environment(ExperimentConfig& cfg);

}  // namespace lmlvamp::harness
