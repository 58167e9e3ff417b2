#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialoggen/core.hpp"

namespace dialoggen {

using ojson = nlohmann::ordered_json;

// ToolSpec <-> pool JSON ({name, description, parameters:[{name, type,
// required, description, enum?}]}).
ojson tool_to_json(const ToolSpec& tool);
ToolSpec tool_from_json(const ojson& value);

/// Loads a tool pool file: a JSON array of tool objects. Validates name
/// uniqueness, parameter uniqueness and enum non-emptiness.
std::vector<ToolSpec> load_tool_pool(const std::string& path);

ojson turn_to_json(const Turn& turn);
Turn turn_from_json(const ojson& value);

/// Renders tools as one JSON object per line, the form the prompts embed.
std::string render_tool_lines(std::span<const ToolSpec* const> tools);
std::string render_tool_lines(const std::vector<ToolSpec>& tools);

/// Renders turns as a pretty-printed JSON array of {role, content} objects.
std::string render_turns(std::span<const Turn> turns);

/// Extracts the text of one "### Header" section: everything after the
/// header line up to the next line starting with '#'.
std::string_view prompt_section(std::string_view prompt, std::string_view header);

/// Finds the first balanced JSON array/object starting at or after `from`
/// (string-literal aware). Returns the block text, or empty if none.
std::string_view balanced_json_block(std::string_view text, std::size_t from = 0);

/// Lenient JSON extraction for LLM replies: strips code fences, then parses
/// the first balanced array or object.
std::optional<ojson> parse_json_reply(std::string_view reply);

}  // namespace dialoggen
