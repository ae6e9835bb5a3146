#pragma once

#include <map>
#include <string>

#include "csab/checkpoint.hpp"

namespace csab {

// Parses line-oriented `key = value` text ('#' comments, blank lines ok).
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Applies recognized keys onto a TrainConfig (including its augmentation
// settings). Unknown keys are rejected so typos fail loudly.
void apply_config(const std::map<std::string, std::string>& kv,
                  TrainConfig& cfg);

}  // namespace csab
