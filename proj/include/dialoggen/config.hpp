#pragma once

#include <string>

#include "dialoggen/core.hpp"

namespace dialoggen {

/// Loads a config file (JSON, keys mirroring GenerationConfig). Unknown keys
/// are errors so typos fail fast. Relative paths inside the file resolve
/// against the file's own directory.
GenerationConfig load_config(const std::string& path);

GenerationConfig config_from_json_text(const std::string& text, const std::string& base_dir);

}  // namespace dialoggen
