#include "dialoggen/core.hpp"

#include <algorithm>
#include <cctype>

#include "dialoggen/fc_parser.hpp"

namespace dialoggen {

std::string to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "unknown";
}

std::string to_string(TurnKind kind) {
    switch (kind) {
        case TurnKind::UserMessage: return "user-message";
        case TurnKind::AssistantCall: return "assistant-call";
        case TurnKind::AssistantText: return "assistant-text";
        case TurnKind::ToolOutput: return "tool-output";
        case TurnKind::System: return "system";
    }
    return "unknown";
}

std::optional<Role> role_from_string(std::string_view text) {
    if (text == "system") return Role::System;
    if (text == "user") return Role::User;
    if (text == "assistant") return Role::Assistant;
    if (text == "tool") return Role::Tool;
    return std::nullopt;
}

std::string to_string(ParamType type) {
    switch (type) {
        case ParamType::String: return "string";
        case ParamType::Integer: return "integer";
        case ParamType::Number: return "number";
        case ParamType::Boolean: return "boolean";
        case ParamType::Array: return "array";
        case ParamType::Object: return "object";
        case ParamType::Enum: return "enum";
    }
    return "unknown";
}

std::optional<ParamType> param_type_from_string(std::string_view text) {
    if (text == "string") return ParamType::String;
    if (text == "integer") return ParamType::Integer;
    if (text == "number") return ParamType::Number;
    if (text == "boolean") return ParamType::Boolean;
    if (text == "array") return ParamType::Array;
    if (text == "object") return ParamType::Object;
    if (text == "enum") return ParamType::Enum;
    return std::nullopt;
}

const ParamSpec* ToolSpec::find_param(std::string_view param_name) const {
    for (const auto& param : parameters) {
        if (param.name == param_name) {
            return &param;
        }
    }
    return nullptr;
}

const ParamValue* FunctionCall::find_arg(std::string_view arg_name) const {
    for (const auto& [name, value] : args) {
        if (name == arg_name) {
            return &value;
        }
    }
    return nullptr;
}

std::vector<const ToolSpec*> Trajectory::tools_in_effect_at(int turn_index) const {
    std::vector<const ToolSpec*> effective;
    effective.reserve(tools.size() + added_tools.size());
    for (const auto& tool : tools) {
        effective.push_back(&tool);
    }
    for (const auto& added : added_tools) {
        if (added.turn_index <= turn_index) {
            effective.push_back(&added.tool);
        }
    }
    return effective;
}

const ToolSpec* Trajectory::find_tool(std::string_view tool_name) const {
    for (const auto& tool : tools) {
        if (tool.name == tool_name) {
            return &tool;
        }
    }
    for (const auto& added : added_tools) {
        if (added.tool.name == tool_name) {
            return &added.tool;
        }
    }
    return nullptr;
}

std::string to_string(InjectionKind kind) {
    switch (kind) {
        case InjectionKind::Clarification: return "clarification";
        case InjectionKind::ToolAwareness: return "tool-awareness";
        case InjectionKind::ErrorSimulation: return "error-simulation";
        case InjectionKind::NonFunctionCalling: return "non-function-calling";
    }
    return "unknown";
}

std::optional<InjectionKind> injection_kind_from_string(std::string_view text) {
    if (text == "clarification") return InjectionKind::Clarification;
    if (text == "tool-awareness") return InjectionKind::ToolAwareness;
    if (text == "error-simulation") return InjectionKind::ErrorSimulation;
    if (text == "non-function-calling") return InjectionKind::NonFunctionCalling;
    return std::nullopt;
}

void RefinementState::apply_splice(int begin, int removed, int inserted) {
    auto first = turn_states.begin() + begin;
    turn_states.erase(first, first + removed);
    turn_states.insert(turn_states.begin() + begin, static_cast<std::size_t>(inserted), TurnState{});
}

bool RefinementState::all_refined() const {
    for (std::size_t i = 1; i < turn_states.size(); ++i) {
        if (!turn_states[i].refined) {
            return false;
        }
    }
    return turn_states.size() > 1;
}

void GenerationConfig::validate() const {
    auto check_range = [](const IntRange& range, const char* name, int lo) {
        if (range.min > range.max || range.min < lo) {
            throw ConfigError(std::string(name) + " range invalid");
        }
    };
    check_range(subtask_range, "subtask", 1);
    check_range(steps_range, "steps", 1);
    check_range(tools_per_instance, "tools_per_instance", 1);
    check_range(injection_count_range, "injection_count", 0);
    check_range(mask_count_range, "mask_count", 1);
    if (mask_count_range.max > 26) {
        throw ConfigError("mask_count range exceeds available placeholders");
    }
    if (weight_decay_factor <= 0.0 || weight_decay_factor >= 1.0) {
        throw ConfigError("weight_decay_factor must lie in (0,1)");
    }
    if (max_refinement_passes < 0 || llm_retry_limit < 1 || instance_call_cap < 1) {
        throw ConfigError("counts must be positive");
    }
    if (workers < 1) {
        throw ConfigError("workers must be >= 1");
    }
    if (enrich_examples && workers > 1) {
        throw ConfigError("enrich_examples requires workers = 1");
    }
    for (const auto& question : panel_questions) {
        // The prefix doubles as the mock's cue for panel-style replies.
        if (question.id.rfind("panel_", 0) != 0) {
            throw ConfigError("panel question ids must start with 'panel_': " + question.id);
        }
    }
}

TurnKind classify_turn(const Turn& turn) {
    switch (turn.role) {
        case Role::System: return TurnKind::System;
        case Role::User: return TurnKind::UserMessage;
        case Role::Tool: return TurnKind::ToolOutput;
        case Role::Assistant:
            return fc::looks_like_calls(turn.content) ? TurnKind::AssistantCall
                                                      : TurnKind::AssistantText;
    }
    return TurnKind::AssistantText;
}

std::vector<AlternationViolation> check_alternation(const Trajectory& trajectory) {
    std::vector<AlternationViolation> violations;
    const auto& turns = trajectory.turns;
    if (turns.empty()) {
        violations.push_back({0, "empty-trajectory"});
        return violations;
    }

    std::vector<TurnKind> kinds(turns.size());
    for (std::size_t i = 0; i < turns.size(); ++i) {
        kinds[i] = classify_turn(turns[i]);
    }

    bool seen_non_system = false;
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const int idx = static_cast<int>(i);
        const TurnKind kind = kinds[i];

        if (kind == TurnKind::System) {
            if (i != 0) {
                violations.push_back({idx, "system-only-at-start"});
            }
            continue;
        }
        if (!seen_non_system) {
            seen_non_system = true;
            if (turns[i].role != Role::User) {
                violations.push_back({idx, "first-turn-user"});
            }
        }

        const bool has_next = i + 1 < turns.size();
        const TurnKind next = has_next ? kinds[i + 1] : TurnKind::System;

        switch (kind) {
            case TurnKind::AssistantCall:
                if (!has_next || next != TurnKind::ToolOutput) {
                    violations.push_back({idx, "call-followed-by-tool"});
                }
                break;
            case TurnKind::AssistantText:
                if (has_next && next != TurnKind::UserMessage) {
                    violations.push_back({idx, "text-followed-by-user"});
                }
                break;
            case TurnKind::ToolOutput:
                if (i == 0 || kinds[i - 1] != TurnKind::AssistantCall) {
                    violations.push_back({idx, "tool-after-call"});
                }
                if (!has_next || turns[i + 1].role != Role::Assistant) {
                    violations.push_back({idx, "tool-followed-by-assistant"});
                }
                break;
            case TurnKind::UserMessage:
                if (has_next && turns[i + 1].role != Role::Assistant) {
                    violations.push_back({idx, "user-followed-by-assistant"});
                }
                break;
            default:
                break;
        }
    }

    if (turns.back().role != Role::Assistant) {
        violations.push_back({static_cast<int>(turns.size()) - 1, "final-turn-assistant"});
    }
    return violations;
}

Trajectory splice_turns(const Trajectory& trajectory, int index, int removed,
                        const std::vector<Turn>& replacement) {
    Trajectory edited = trajectory;
    auto first = edited.turns.begin() + index;
    edited.turns.erase(first, first + removed);
    edited.turns.insert(edited.turns.begin() + index, replacement.begin(), replacement.end());
    return edited;
}

std::string trim(std::string_view text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) {
        ++begin;
    }
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) {
        --end;
    }
    return std::string(text.substr(begin, end - begin));
}

}  // namespace dialoggen
