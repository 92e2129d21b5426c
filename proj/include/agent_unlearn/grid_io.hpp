#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "agent_unlearn/gridworld.hpp"

namespace au::env {

// Text form: one character per cell, one row per line, each line terminated
// by '\n'. '#' obstacle, 'T' treasure, '.' empty, 'S' start. The text form
// has no slot for the environment id, so it is supplied on parse.
std::string to_text(const GridSpec& spec);
GridSpec from_text(std::string_view text, std::string env_id = "grid");

// JSON form: {"env_id","height","obstacles","start","treasures","width"}.
nlohmann::json to_json(const GridSpec& spec);
GridSpec from_json(const nlohmann::json& doc);

// Canonical serialized JSON (2-space indent, trailing newline).
std::string to_json_text(const GridSpec& spec);
GridSpec from_json_text(std::string_view text);

nlohmann::json coord_to_json(const Coord& c);
Coord coord_from_json(const nlohmann::json& j);

}  // namespace au::env
