#pragma once

#include <json.hpp>

#include "slate/channel.hpp"
#include "slate/model_config.hpp"

namespace slate {

void to_json(nlohmann::json& j, const ModelConfig& c);
// Missing keys keep their defaults; unknown keys are rejected (ConfigError).
void from_json(const nlohmann::json& j, ModelConfig& c);

void to_json(nlohmann::json& j, const ChannelConfig& c);
void from_json(const nlohmann::json& j, ChannelConfig& c);

}  // namespace slate
