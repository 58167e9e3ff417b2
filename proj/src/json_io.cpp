#include "dialoggen/json_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dialoggen {

ojson tool_to_json(const ToolSpec& tool) {
    ojson params = ojson::array();
    for (const auto& param : tool.parameters) {
        ojson p;
        p["name"] = param.name;
        p["type"] = to_string(param.type);
        p["required"] = param.required;
        p["description"] = param.description;
        if (param.type == ParamType::Enum) {
            p["enum"] = param.enum_values;
        }
        params.push_back(std::move(p));
    }
    ojson out;
    out["name"] = tool.name;
    out["description"] = tool.description;
    out["parameters"] = std::move(params);
    return out;
}

ToolSpec tool_from_json(const ojson& value) {
    if (!value.is_object() || !value.contains("name") || !value.contains("description")) {
        throw ConfigError("tool spec must be an object with name and description");
    }
    ToolSpec tool;
    tool.name = value.at("name").get<std::string>();
    tool.description = value.at("description").get<std::string>();
    if (value.contains("parameters")) {
        if (!value.at("parameters").is_array()) {
            throw ConfigError("tool '" + tool.name + "': parameters must be an array");
        }
        std::set<std::string> seen;
        for (const auto& p : value.at("parameters")) {
            ParamSpec param;
            param.name = p.at("name").get<std::string>();
            if (!seen.insert(param.name).second) {
                throw ConfigError("tool '" + tool.name + "': duplicate parameter '" + param.name + "'");
            }
            const auto type = param_type_from_string(p.at("type").get<std::string>());
            if (!type) {
                throw ConfigError("tool '" + tool.name + "': unknown parameter type '" +
                                  p.at("type").get<std::string>() + "'");
            }
            param.type = *type;
            param.required = p.value("required", false);
            param.description = p.value("description", "");
            if (p.contains("enum")) {
                param.enum_values = p.at("enum").get<std::vector<std::string>>();
            }
            if (param.type == ParamType::Enum && param.enum_values.empty()) {
                throw ConfigError("tool '" + tool.name + "': enum parameter '" + param.name +
                                  "' needs at least one value");
            }
            tool.parameters.push_back(std::move(param));
        }
    }
    return tool;
}

std::vector<ToolSpec> load_tool_pool(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open tool pool: " + path);
    }
    ojson doc;
    try {
        doc = ojson::parse(in);
    } catch (const nlohmann::json::parse_error& err) {
        throw ConfigError("tool pool " + path + ": " + err.what());
    }
    if (!doc.is_array()) {
        throw ConfigError("tool pool must be a JSON array: " + path);
    }
    std::vector<ToolSpec> pool;
    std::set<std::string> names;
    for (const auto& entry : doc) {
        ToolSpec tool = tool_from_json(entry);
        if (!names.insert(tool.name).second) {
            throw ConfigError("tool pool: duplicate tool name '" + tool.name + "'");
        }
        pool.push_back(std::move(tool));
    }
    return pool;
}

ojson turn_to_json(const Turn& turn) {
    ojson out;
    out["role"] = to_string(turn.role);
    out["content"] = turn.content;
    return out;
}

Turn turn_from_json(const ojson& value) {
    if (!value.is_object() || !value.contains("role") || !value.contains("content")) {
        throw ConfigError("turn must be an object with role and content");
    }
    const auto role = role_from_string(value.at("role").get<std::string>());
    if (!role) {
        throw ConfigError("unknown role '" + value.at("role").get<std::string>() + "'");
    }
    if (!value.at("content").is_string()) {
        throw ConfigError("turn content must be a string");
    }
    return Turn{*role, value.at("content").get<std::string>()};
}

std::string render_tool_lines(std::span<const ToolSpec* const> tools) {
    std::string out;
    for (const ToolSpec* tool : tools) {
        out += tool_to_json(*tool).dump();
        out.push_back('\n');
    }
    if (!out.empty()) {
        out.pop_back();
    }
    return out;
}

std::string render_tool_lines(const std::vector<ToolSpec>& tools) {
    std::vector<const ToolSpec*> ptrs;
    ptrs.reserve(tools.size());
    for (const auto& tool : tools) {
        ptrs.push_back(&tool);
    }
    return render_tool_lines(ptrs);
}

std::string render_turns(std::span<const Turn> turns) {
    ojson arr = ojson::array();
    for (const auto& turn : turns) {
        arr.push_back(turn_to_json(turn));
    }
    return arr.dump(2);
}

std::string_view prompt_section(std::string_view prompt, std::string_view header) {
    const std::size_t at = prompt.find(header);
    if (at == std::string_view::npos) {
        return {};
    }
    std::size_t begin = prompt.find('\n', at);
    if (begin == std::string_view::npos) {
        return {};
    }
    ++begin;
    std::size_t end = begin;
    while (end < prompt.size()) {
        const std::size_t nl = prompt.find('\n', end);
        if (nl == std::string_view::npos) {
            end = prompt.size();
            break;
        }
        if (nl + 1 < prompt.size() && prompt[nl + 1] == '#') {
            end = nl;
            break;
        }
        end = nl + 1;
    }
    return prompt.substr(begin, end - begin);
}

std::string_view balanced_json_block(std::string_view text, std::size_t from) {
    std::size_t start = std::string_view::npos;
    for (std::size_t i = from; i < text.size(); ++i) {
        if (text[i] == '[' || text[i] == '{') {
            start = i;
            break;
        }
    }
    if (start == std::string_view::npos) {
        return {};
    }
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '[' || c == '{') {
            ++depth;
        } else if (c == ']' || c == '}') {
            --depth;
            if (depth == 0) {
                return text.substr(start, i - start + 1);
            }
        }
    }
    return {};
}

std::optional<ojson> parse_json_reply(std::string_view reply) {
    const std::string_view block = balanced_json_block(reply);
    if (block.empty()) {
        return std::nullopt;
    }
    try {
        return ojson::parse(block);
    } catch (const nlohmann::json::parse_error&) {
        return std::nullopt;
    }
}

}  // namespace dialoggen
