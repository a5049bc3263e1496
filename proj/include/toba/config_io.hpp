#pragma once

// JSON encoding of the configuration records. Missing keys keep their
// defaults; unknown keys are rejected with ConfigError so typos surface.

#include <string>

#include "json.hpp"
#include "toba/backbone.hpp"
#include "toba/train.hpp"

namespace toba {

using json = nlohmann::ordered_json;

json to_json(const engram::EngramConfig& c);
json to_json(const nn::ModelConfig& c);
json to_json(const train::TrainConfig& c);

// A "preset" key ("desk" or "full-1p2b") selects the starting point before
// the remaining keys are applied.
nn::ModelConfig model_config_from_json(const json& j);
train::TrainConfig train_config_from_json(const json& j);

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

std::string precision_name(nn::Precision p);
nn::Precision parse_precision(const std::string& s);

}  // namespace toba
