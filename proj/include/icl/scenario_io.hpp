#pragma once

#include "icl/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace icl
{

/// Parse a scenario document. Unknown keys are rejected and errors carry the
/// offending field path. Decibel fields are converted to linear SI.
ScenarioConfig scenario_from_json(const nlohmann::json &doc);
nlohmann::json scenario_to_json(const ScenarioConfig &cfg);

ScenarioConfig load_scenario(const std::filesystem::path &path);

/// The built-in simulation scenario (three BSs, seven users, 1 W budget).
ScenarioConfig reference_scenario();

} // namespace icl
