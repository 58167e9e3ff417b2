#include "dialoggen/initializer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "dialoggen/fc_parser.hpp"
#include "dialoggen/json_io.hpp"

namespace dialoggen {

namespace {

constexpr double kGenerationTemperature = 0.7;

std::string lowercase(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

PromptExamples PromptExamples::load_from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open prompt examples: " + path);
    }
    ojson doc;
    try {
        doc = ojson::parse(in);
    } catch (const nlohmann::json::parse_error& err) {
        throw ConfigError("prompt examples " + path + ": " + err.what());
    }
    PromptExamples examples;
    examples.task_examples = doc.at("task_init").get<std::vector<std::string>>();
    if (examples.task_examples.empty()) {
        throw ConfigError("prompt examples: task_init list is empty");
    }
    examples.trajectory_example = doc.at("traj_init").get<std::string>();
    examples.clarification_example = doc.at("clarification").get<std::string>();
    examples.tool_awareness_example = doc.at("tool_awareness").get<std::string>();
    examples.error_simulation_example = doc.at("error_simulation").get<std::string>();
    examples.non_function_calling_example = doc.at("non_function_calling").get<std::string>();
    return examples;
}

TaskPlanShape sample_task_plan_shape(const GenerationConfig& config, Rng& rng) {
    TaskPlanShape shape;
    shape.subtask_count = rng.uniform_int(config.subtask_range.min, config.subtask_range.max);
    shape.steps.reserve(shape.subtask_count);
    for (int i = 0; i < shape.subtask_count; ++i) {
        shape.steps.push_back(rng.uniform_int(config.steps_range.min, config.steps_range.max));
    }
    return shape;
}

std::string render_current_task(const Subtask& subtask) {
    return subtask.description + "\nPlanned tool-calling steps: " + std::to_string(subtask.step_count);
}

Subtask Initializer::init_task(const std::vector<ToolSpec>& tools,
                               const std::vector<Subtask>& completed, int step_number,
                               const std::string& instance_id, std::size_t examples_cursor) const {
    // Round-robin window of up to three reference examples.
    std::string examples_text;
    const auto& pool = examples_.task_examples;
    const std::size_t count = std::min<std::size_t>(3, pool.size());
    for (std::size_t i = 0; i < count; ++i) {
        examples_text += std::to_string(i + 1) + ". " + pool[(examples_cursor + i) % pool.size()];
        if (i + 1 < count) {
            examples_text.push_back('\n');
        }
    }

    std::string completed_text;
    for (const auto& prior : completed) {
        completed_text += "- " + prior.description + "\n";
    }
    if (completed_text.empty()) {
        completed_text = "(empty)";
    } else {
        completed_text.pop_back();
    }

    const std::string prompt = templates_.get("task_init").render({
        {"examples", examples_text},
        {"candidate_tools", render_tool_lines(tools)},
        {"completed_task", completed_text},
        {"step_number", std::to_string(step_number)},
    });

    ChatRequest request;
    request.messages = {{"user", prompt}};
    request.temperature = kGenerationTemperature;
    request.tag = "task_init";
    request.instance_id = instance_id;

    const std::string description = complete_with_retry<std::string>(
        backend_, request,
        [](const std::string& reply) {
            const std::size_t start = reply.find("<Task_Start>");
            const std::size_t end = reply.find("<Task_End>");
            if (start == std::string::npos || end == std::string::npos || end <= start) {
                throw ValidationError("missing Task_Start/Task_End markers");
            }
            const std::string text = trim(reply.substr(start + 12, end - start - 12));
            if (text.empty()) {
                throw ValidationError("empty task description");
            }
            return text;
        },
        config_.llm_retry_limit);

    Subtask subtask;
    subtask.description = description;
    subtask.step_count = step_number;
    const std::string haystack = lowercase(description);
    for (const auto& tool : tools) {
        if (haystack.find(lowercase(tool.name)) != std::string::npos) {
            subtask.required_tools.push_back(tool.name);
        }
    }
    return subtask;
}

std::vector<Turn> validate_fragment_reply(const std::string& reply, int expected_steps) {
    const auto decoded = parse_json_reply(reply);
    if (!decoded || !decoded->is_array() || decoded->empty()) {
        throw ValidationError("reply is not a JSON array of turns");
    }
    std::vector<Turn> turns;
    for (const auto& item : *decoded) {
        if (!item.is_object() || !item.contains("role") || !item.contains("content") ||
            !item.at("content").is_string()) {
            throw ValidationError("turn entries need role and content strings");
        }
        const auto role = role_from_string(item.at("role").get<std::string>());
        if (!role) {
            throw ValidationError("unknown role '" + item.at("role").get<std::string>() + "'");
        }
        Turn turn{*role, item.at("content").get<std::string>()};
        if (trim(turn.content).empty()) {
            throw ValidationError("turn content is empty");
        }
        turns.push_back(std::move(turn));
    }

    // Shape contract: user opener, alternating call/tool pairs, one closing
    // summary. The user speaks exactly once, up front.
    if (turns.front().role != Role::User) {
        throw ValidationError("fragment must start with the user turn");
    }
    if (turns.size() != 2 + 2 * static_cast<std::size_t>(expected_steps)) {
        throw ValidationError("fragment must hold exactly " + std::to_string(expected_steps) +
                              " call steps plus opener and summary");
    }
    for (std::size_t i = 1; i + 1 < turns.size(); i += 2) {
        if (turns[i].role != Role::Assistant) {
            throw ValidationError("expected assistant call at fragment turn " + std::to_string(i));
        }
        try {
            if (fc::parse_calls(turns[i].content).empty()) {
                throw ValidationError("empty call list at fragment turn " + std::to_string(i));
            }
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& err) {
            throw ValidationError("unparseable call at fragment turn " + std::to_string(i) + ": " +
                                  err.what());
        }
        if (turns[i + 1].role != Role::Tool) {
            throw ValidationError("call at fragment turn " + std::to_string(i) +
                                  " is not followed by a tool turn");
        }
        try {
            fc::parse_tool_output(turns[i + 1].content);
        } catch (const std::exception& err) {
            throw ValidationError("bad tool output at fragment turn " + std::to_string(i + 1) + ": " +
                                  err.what());
        }
    }
    const Turn& last = turns.back();
    if (last.role != Role::Assistant || classify_turn(last) != TurnKind::AssistantText) {
        throw ValidationError("fragment must close with an assistant summary");
    }
    return turns;
}

std::vector<Turn> Initializer::init_subtrajectory(const Subtask& subtask,
                                                  const std::vector<ToolSpec>& tools,
                                                  const std::vector<Turn>& history,
                                                  const std::string& instance_id) const {
    const std::string prompt = templates_.get("traj_init").render({
        {"example", examples_.trajectory_example},
        {"candidate_tools", render_tool_lines(tools)},
        {"current_task", render_current_task(subtask)},
        {"history_trajectory", history.empty() ? "[]" : render_turns(history)},
    });

    ChatRequest request;
    request.messages = {{"user", prompt}};
    request.temperature = kGenerationTemperature;
    request.tag = "traj_init";
    request.instance_id = instance_id;

    return complete_with_retry<std::vector<Turn>>(
        backend_, request,
        [&subtask](const std::string& reply) {
            return validate_fragment_reply(reply, subtask.step_count);
        },
        config_.llm_retry_limit);
}

std::string Initializer::render_system_turn(const std::vector<ToolSpec>& tools) const {
    return templates_.get("system_prompt").render({{"candidate_tools", render_tool_lines(tools)}});
}

Trajectory Initializer::compose_skeleton(const std::vector<std::vector<Turn>>& fragments,
                                         const std::vector<ToolSpec>& tools) const {
    Trajectory trajectory;
    trajectory.tools = tools;
    trajectory.turns.push_back(Turn{Role::System, render_system_turn(tools)});
    for (const auto& fragment : fragments) {
        trajectory.turns.insert(trajectory.turns.end(), fragment.begin(), fragment.end());
    }
    const auto violations = check_alternation(trajectory);
    if (!violations.empty()) {
        std::string detail;
        for (const auto& violation : violations) {
            detail += " [" + std::to_string(violation.index) + ":" + violation.rule + "]";
        }
        throw CompositionError("composed skeleton breaks alternation:" + detail);
    }
    return trajectory;
}

}  // namespace dialoggen
