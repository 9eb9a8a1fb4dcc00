#pragma once

#include <filesystem>

#include <json.hpp>

#include "thrifty/engine.hpp"
#include "thrifty/fleet.hpp"

namespace thrifty {

/// Complete JSON image of a run configuration (every field present).
nlohmann::ordered_json config_to_json(const RunConfig& config);

/// Overlays the keys present in `j` on `base`. Unknown keys and a
/// lazydagger_tau_a that is not 0.25 * lazydagger_tau_h are rejected with
/// std::invalid_argument.
RunConfig config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

/// Hash of the canonical JSON image, recorded in checkpoints.
std::string config_hash(const RunConfig& config);

nlohmann::ordered_json env_to_json(const env::EnvConfig& env);
env::EnvConfig env_from_json(const nlohmann::json& j, env::EnvConfig base = {});

}  // namespace thrifty
