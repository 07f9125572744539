#pragma once

#include "cfmm/scenario.hpp"

#include <cstdint>
#include <string>

namespace cfmm {

/// Parses a JSON configuration. Keys not listed in ScenarioConfig are an
/// error; absent keys keep the desk-profile default.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::string& path);

/// Canonical JSON rendering (stable key order, round-trips through parse_config).
std::string to_json(const ScenarioConfig& config);

/// FNV-1a of the canonical rendering.
std::uint64_t fingerprint(const ScenarioConfig& config);

}  // namespace cfmm
