#pragma once

#include <cstddef>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialoggen/core.hpp"

namespace dialoggen::fc {

// Bracketed call syntax used by assistant turns:
//
//   CallList := "[" Call ("," Call)* "]" | "[]"
//   Call     := identifier "(" (Arg ("," Arg)*)? ")"
//   Arg      := identifier "=" Value
//   Value    := quoted-string | integer | real | true | false | null
//             | "[" (Value ("," Value)*)? "]"
//             | "{" (quoted-key ":" Value ("," quoted-key ":" Value)*)? "}"
//
// Identifiers match [A-Za-z_][A-Za-z0-9_.]*. Whitespace between tokens is
// insignificant. Strings accept single or double quotes with backslash
// escapes; the serializer always emits single quotes.

struct SyntaxError : std::runtime_error {
    SyntaxError(std::size_t position, std::string expected_what)
        : std::runtime_error("syntax error at position " + std::to_string(position) +
                             ": expected " + expected_what),
          position(position),
          expected(std::move(expected_what)) {}

    std::size_t position;
    std::string expected;
};

struct DuplicateArg : std::runtime_error {
    explicit DuplicateArg(std::string arg_name)
        : std::runtime_error("duplicate argument '" + arg_name + "'"), name(std::move(arg_name)) {}

    std::string name;
};

struct NotAnArray : std::runtime_error {
    explicit NotAnArray(const std::string& what) : std::runtime_error(what) {}
};

/// Parses `text` as exactly one CallList (surrounding whitespace ignored).
/// Throws SyntaxError on malformed input, DuplicateArg when an argument name
/// repeats within one call.
std::vector<FunctionCall> parse_calls(std::string_view text);

/// True iff `text` parses as a CallList. Never throws.
bool looks_like_calls(std::string_view text);

/// Canonical inverse of parse_calls: single space after commas, strings
/// single-quoted with internal quotes escaped. parse_calls(serialize_calls(x))
/// reproduces x exactly.
std::string serialize_calls(const std::vector<FunctionCall>& calls);

std::string serialize_value(const ParamValue& value);

/// Decodes a tool turn: a JSON array of result objects. Single objects are
/// rejected (NotAnArray); generators must wrap.
std::vector<nlohmann::ordered_json> parse_tool_output(std::string_view text);

/// Patterns deciding what counts as an "ID-like" string: an uppercase prefix
/// joined to an alphanumeric tail (BK-88213, ORD_1), a 16+ digit hex run, or
/// a UUID. Extend via the extract_ids overloads taking a pattern list.
const std::vector<std::string>& default_id_patterns();

/// Scans every string in the value tree and returns each substring matching
/// one of the ID patterns.
std::set<std::string> extract_ids(const ParamValue& value);
std::set<std::string> extract_ids(const ParamValue& value, const std::vector<std::string>& patterns);
std::set<std::string> extract_ids(const nlohmann::ordered_json& value);
std::set<std::string> extract_ids(const nlohmann::ordered_json& value,
                                  const std::vector<std::string>& patterns);
std::set<std::string> extract_ids_from_text(std::string_view text);
std::set<std::string> extract_ids_from_text(std::string_view text,
                                            const std::vector<std::string>& patterns);

/// ParamValue <-> JSON bridges (objects keep member order).
nlohmann::ordered_json to_json(const ParamValue& value);
ParamValue param_value_from_json(const nlohmann::ordered_json& value);

}  // namespace dialoggen::fc
