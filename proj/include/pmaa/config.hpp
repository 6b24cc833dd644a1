#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pmaa/model.hpp"
#include "pmaa/train.hpp"

namespace pmaa {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// "key=value" lines; "#" comments and blank lines skipped, whitespace
/// around keys and values trimmed. Errors name the line.
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Sets one ModelConfig field. Returns false for keys it does not own and
/// throws std::invalid_argument for malformed values.
bool set_model_option(ModelConfig& config, const std::string& key, const std::string& value);
bool set_train_option(TrainConfig& config, const std::string& key, const std::string& value);

/// Every field as key=value lines, in a fixed order.
std::string format_model_config(const ModelConfig& config);
std::string format_train_config(const TrainConfig& config);

/// One row per non-comment line, each a whitespace-separated list of
/// key=value tokens. Errors name the line.
std::vector<KeyValues> parse_grid(const std::string& text);

/// Parses text produced by format_model_config; unknown keys are rejected.
ModelConfig model_config_from_text(const std::string& text);

}  // namespace pmaa
