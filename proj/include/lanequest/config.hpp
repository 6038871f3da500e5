#pragma once

// Flat `key = value` parameter files for the detectors, filter and learner.

#include <string>
#include <string_view>
#include <vector>

#include "lanequest/pipeline.hpp"

namespace lanequest {

/// Applies each `key = value` line to `cfg`. Blank lines and `#` comments
/// are skipped. Throws ParseError on unknown keys or bad values, then
/// validates the result.
void apply_config_text(std::string_view text, PipelineConfig& cfg);
PipelineConfig load_config(const std::string& path);

/// Every key with its current value, one per line; parses back to `cfg`.
std::string format_config(const PipelineConfig& cfg);

std::vector<std::string> config_keys();

}  // namespace lanequest
