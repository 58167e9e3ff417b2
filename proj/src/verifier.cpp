#include "dialoggen/verifier.hpp"

#include <algorithm>
#include <sstream>

#include "dialoggen/fc_parser.hpp"
#include "dialoggen/json_io.hpp"

namespace dialoggen {

namespace {

constexpr int kRepetitionWindow = 20;
constexpr int kRepetitionLimit = 3;

RuleOutcome fatal(std::string rule, std::string details, std::vector<int> turns) {
    return RuleOutcome{std::move(rule), Severity::Fatal, false, std::move(details), std::move(turns)};
}

bool value_matches_type(const ParamValue& value, const ParamSpec& spec) {
    switch (spec.type) {
        case ParamType::String: return value.is_string();
        case ParamType::Integer: return value.is_integer();
        case ParamType::Number: return value.is_integer() || value.is_real();
        case ParamType::Boolean: return value.is_bool();
        case ParamType::Array: return value.is_array();
        case ParamType::Object: return value.is_object();
        case ParamType::Enum:
            return value.is_string() &&
                   std::find(spec.enum_values.begin(), spec.enum_values.end(), value.as_string()) !=
                       spec.enum_values.end();
    }
    return false;
}

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream stream(text);
    std::string token;
    while (stream >> token) {
        tokens.push_back(token);
    }
    return tokens;
}

const char* json_type_class(const nlohmann::ordered_json& value) {
    if (value.is_string()) return "string";
    if (value.is_number()) return "number";
    if (value.is_boolean()) return "boolean";
    if (value.is_null()) return "null";
    if (value.is_array()) return "array";
    return "object";
}

bool same_shape(const nlohmann::ordered_json& a, const nlohmann::ordered_json& b) {
    if (!a.is_object() || !b.is_object() || a.size() != b.size()) {
        return false;
    }
    for (const auto& [key, value] : a.items()) {
        if (!b.contains(key)) {
            return false;
        }
        if (std::string(json_type_class(value)) != json_type_class(b.at(key))) {
            return false;
        }
    }
    return true;
}

}  // namespace

std::string to_string(Severity severity) {
    return severity == Severity::Fatal ? "fatal" : "warning";
}

bool VerificationReport::has_fatal_failure() const {
    for (const auto& outcome : rule_results) {
        if (!outcome.passed && outcome.severity == Severity::Fatal) {
            return true;
        }
    }
    return false;
}

std::vector<RuleOutcome> check_format(const Trajectory& trajectory) {
    std::vector<RuleOutcome> outcomes;
    for (const auto& violation : check_alternation(trajectory)) {
        outcomes.push_back(
            fatal("alternation:" + violation.rule, "dialogue structure violated", {violation.index}));
    }
    for (std::size_t i = 0; i < trajectory.turns.size(); ++i) {
        const Turn& turn = trajectory.turns[i];
        const int idx = static_cast<int>(i);
        if (trim(turn.content).empty()) {
            outcomes.push_back(fatal("empty-content", "turn content empty after trimming", {idx}));
            continue;
        }
        const TurnKind kind = classify_turn(turn);
        if (kind == TurnKind::AssistantCall && fc::parse_calls(turn.content).empty()) {
            outcomes.push_back(
                fatal("empty-call-list", "assistant must either call or speak", {idx}));
        }
        if (kind == TurnKind::ToolOutput) {
            try {
                fc::parse_tool_output(turn.content);
            } catch (const std::exception& err) {
                outcomes.push_back(fatal("tool-output-format", err.what(), {idx}));
            }
        }
    }
    return outcomes;
}

std::vector<RuleOutcome> check_calls(const Trajectory& trajectory) {
    std::vector<RuleOutcome> outcomes;
    for (std::size_t i = 0; i < trajectory.turns.size(); ++i) {
        const Turn& turn = trajectory.turns[i];
        if (classify_turn(turn) != TurnKind::AssistantCall) {
            continue;
        }
        const int idx = static_cast<int>(i);
        const auto effective = trajectory.tools_in_effect_at(idx);
        for (const auto& call : fc::parse_calls(turn.content)) {
            const ToolSpec* spec = nullptr;
            for (const ToolSpec* tool : effective) {
                if (tool->name == call.name) {
                    spec = tool;
                }
            }
            if (spec == nullptr) {
                outcomes.push_back(fatal("unknown-tool",
                                         "call to '" + call.name + "' outside the tool set in effect",
                                         {idx}));
                continue;
            }
            for (const auto& param : spec->parameters) {
                if (param.required && call.find_arg(param.name) == nullptr) {
                    outcomes.push_back(fatal(
                        "missing-required-param",
                        "'" + call.name + "' lacks required parameter '" + param.name + "'", {idx}));
                }
            }
            for (const auto& [arg_name, arg_value] : call.args) {
                const ParamSpec* param = spec->find_param(arg_name);
                if (param == nullptr) {
                    outcomes.push_back(fatal(
                        "unknown-param",
                        "'" + call.name + "' has no parameter '" + arg_name + "'", {idx}));
                    continue;
                }
                if (!value_matches_type(arg_value, *param)) {
                    outcomes.push_back(
                        fatal(param->type == ParamType::Enum ? "enum-value" : "param-type",
                              "value of '" + arg_name + "' incompatible with declared " +
                                  to_string(param->type),
                              {idx}));
                }
            }
        }
    }
    return outcomes;
}

std::vector<RuleOutcome> check_hallucinated_ids(const Trajectory& trajectory) {
    std::vector<RuleOutcome> outcomes;
    std::string history;
    for (std::size_t i = 0; i < trajectory.turns.size(); ++i) {
        const Turn& turn = trajectory.turns[i];
        if (classify_turn(turn) == TurnKind::AssistantCall) {
            for (const auto& call : fc::parse_calls(turn.content)) {
                for (const auto& [arg_name, arg_value] : call.args) {
                    for (const auto& id : fc::extract_ids(arg_value)) {
                        if (history.find(id) == std::string::npos) {
                            outcomes.push_back(fatal(
                                "hallucinated-id",
                                "'" + id + "' referenced by '" + call.name +
                                    "' never appeared earlier",
                                {static_cast<int>(i)}));
                        }
                    }
                }
            }
        }
        history += turn.content;
        history.push_back('\n');
    }
    return outcomes;
}

std::vector<RuleOutcome> check_repetition(const Trajectory& trajectory) {
    std::vector<RuleOutcome> outcomes;
    const auto& turns = trajectory.turns;

    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (turns[i].role != Role::Assistant) {
            continue;
        }
        for (std::size_t j = i + 1; j < turns.size(); ++j) {
            if (turns[j].role == Role::Assistant && turns[j].content == turns[i].content) {
                outcomes.push_back(fatal("duplicate-assistant-turn",
                                         "assistant turns are byte-identical",
                                         {static_cast<int>(i), static_cast<int>(j)}));
            }
        }

        const auto tokens = whitespace_tokens(turns[i].content);
        if (static_cast<int>(tokens.size()) >= kRepetitionWindow) {
            std::map<std::string, int> window_counts;
            for (std::size_t w = 0; w + kRepetitionWindow <= tokens.size(); ++w) {
                std::string window;
                for (int t = 0; t < kRepetitionWindow; ++t) {
                    window += tokens[w + t];
                    window.push_back(' ');
                }
                if (++window_counts[window] == kRepetitionLimit) {
                    outcomes.push_back(fatal("repeated-window",
                                             "a 20-token window repeats three times",
                                             {static_cast<int>(i)}));
                    break;
                }
            }
        }
    }

    for (std::size_t i = 0; i + 1 < turns.size(); ++i) {
        if (turns[i].role == Role::User && turns[i + 1].role == Role::User &&
            turns[i].content == turns[i + 1].content) {
            outcomes.push_back(RuleOutcome{"duplicate-user-turn", Severity::Warning, false,
                                           "consecutive identical user turns",
                                           {static_cast<int>(i), static_cast<int>(i + 1)}});
        }
    }
    return outcomes;
}

std::vector<RuleOutcome> check_executability(const Trajectory& trajectory,
                                             const std::map<std::string, ToolExecutor>& executors) {
    std::vector<RuleOutcome> outcomes;
    if (executors.empty()) {
        return outcomes;
    }
    const auto& turns = trajectory.turns;
    for (std::size_t i = 0; i + 1 < turns.size(); ++i) {
        if (classify_turn(turns[i]) != TurnKind::AssistantCall || turns[i + 1].role != Role::Tool) {
            continue;
        }
        const auto calls = fc::parse_calls(turns[i].content);
        std::vector<nlohmann::ordered_json> recorded;
        try {
            recorded = fc::parse_tool_output(turns[i + 1].content);
        } catch (const std::exception&) {
            continue;  // format check reports this
        }
        bool any_hooked = false;
        for (const auto& call : calls) {
            any_hooked = any_hooked || executors.count(call.name) > 0;
        }
        if (!any_hooked) {
            continue;
        }
        if (recorded.size() != calls.size()) {
            outcomes.push_back(fatal("output-shape",
                                     "result count does not match call count",
                                     {static_cast<int>(i + 1)}));
            continue;
        }
        for (std::size_t c = 0; c < calls.size(); ++c) {
            auto executor = executors.find(calls[c].name);
            if (executor == executors.end()) {
                continue;
            }
            nlohmann::ordered_json produced;
            try {
                produced = executor->second(calls[c]);
            } catch (const std::exception& err) {
                outcomes.push_back(fatal("executor-error",
                                         "'" + calls[c].name + "' raised: " + err.what(),
                                         {static_cast<int>(i)}));
                continue;
            }
            if (!same_shape(produced, recorded[c])) {
                outcomes.push_back(fatal("output-shape",
                                         "recorded output of '" + calls[c].name +
                                             "' does not match the executed shape",
                                         {static_cast<int>(i + 1)}));
            }
        }
    }
    return outcomes;
}

const std::vector<PanelQuestion>& default_panel() {
    static const std::vector<PanelQuestion> panel = {
        {"panel_coherence", true},
        {"panel_tool_output", true},
        {"panel_resolution", true},
        {"panel_hallucination", false},  // "no hallucination" is the passing answer
    };
    return panel;
}

std::vector<PanelResult> Verifier::model_panel(const Trajectory& trajectory,
                                               const std::string& instance_id) const {
    std::vector<Turn> visible;
    for (const auto& turn : trajectory.turns) {
        if (turn.role != Role::System) {
            visible.push_back(turn);
        }
    }
    std::vector<const ToolSpec*> tools;
    for (const auto& tool : trajectory.tools) {
        tools.push_back(&tool);
    }
    for (const auto& added : trajectory.added_tools) {
        tools.push_back(&added.tool);
    }

    std::vector<PanelResult> results;
    for (const auto& question : panel_) {
        const std::string prompt = templates_->get(question.id).render({
            {"candidate_tools", render_tool_lines(tools)},
            {"conversation", render_turns(visible)},
        });
        ChatRequest request;
        request.messages = {{"user", prompt}};
        request.temperature = 0.0;
        request.max_output_tokens = 1024;
        request.tag = question.id;
        request.instance_id = instance_id;

        PanelResult result;
        result.question_id = question.id;
        try {
            const auto verdict = complete_with_retry<std::pair<bool, std::string>>(
                *backend_, request,
                [](const std::string& reply) {
                    const auto decoded = parse_json_reply(reply);
                    if (!decoded || !decoded->is_object() || !decoded->contains("answer")) {
                        throw ValidationError("verdict object with an answer key expected");
                    }
                    std::string answer = trim(decoded->at("answer").get<std::string>());
                    std::transform(answer.begin(), answer.end(), answer.begin(),
                                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
                    if (answer != "yes" && answer != "no") {
                        throw ValidationError("answer must be yes or no");
                    }
                    return std::make_pair(answer == "yes", decoded->value("rationale", ""));
                },
                config_.llm_retry_limit);
            result.positive = verdict.first == question.pass_answer_yes;
            result.rationale = verdict.second;
        } catch (const ValidationExhausted& err) {
            result.positive = false;  // conservative
            result.rationale = err.what();
        }
        results.push_back(std::move(result));
    }
    return results;
}

VerificationReport Verifier::run(const Instance& instance, bool allow_panel) const {
    VerificationReport report;
    const Trajectory& trajectory = instance.trajectory;

    struct Family {
        const char* name;
        std::vector<RuleOutcome> outcomes;
    };
    std::vector<Family> families = {
        {"format", check_format(trajectory)},
        {"calls", check_calls(trajectory)},
        {"hallucinated-ids", check_hallucinated_ids(trajectory)},
        {"repetition", check_repetition(trajectory)},
    };
    if (!executors_.empty()) {
        families.push_back({"executability", check_executability(trajectory, executors_)});
    }
    for (auto& family : families) {
        if (family.outcomes.empty()) {
            report.rule_results.push_back(RuleOutcome{family.name, Severity::Fatal, true, "", {}});
        } else {
            for (auto& outcome : family.outcomes) {
                report.rule_results.push_back(std::move(outcome));
            }
        }
    }

    // Model panel only on rule-clean instances: no point spending calls on
    // something already rejected.
    if (allow_panel && config_.panel_enabled && backend_ != nullptr && templates_ != nullptr &&
        !report.has_fatal_failure()) {
        report.model_results = model_panel(trajectory, instance.id);
        report.panel_ran = true;
    }

    bool panel_positive = true;
    for (const auto& result : report.model_results) {
        panel_positive = panel_positive && result.positive;
    }
    report.passed = !report.has_fatal_failure() && panel_positive;
    return report;
}

VerificationReport Verifier::verify(const Instance& instance) const {
    return run(instance, true);
}

VerificationReport Verifier::verify_rules_only(const Instance& instance) const {
    return run(instance, false);
}

nlohmann::ordered_json report_to_json(const VerificationReport& report) {
    ojson out;
    out["passed"] = report.passed;
    ojson rules = ojson::array();
    for (const auto& outcome : report.rule_results) {
        ojson entry;
        entry["rule"] = outcome.rule;
        entry["severity"] = to_string(outcome.severity);
        entry["passed"] = outcome.passed;
        entry["details"] = outcome.details;
        entry["turns"] = outcome.turns;
        rules.push_back(std::move(entry));
    }
    out["rule_results"] = std::move(rules);
    ojson panel = ojson::array();
    for (const auto& result : report.model_results) {
        ojson entry;
        entry["id"] = result.question_id;
        entry["positive"] = result.positive;
        entry["rationale"] = result.rationale;
        panel.push_back(std::move(entry));
    }
    out["model_results"] = std::move(panel);
    out["panel_ran"] = report.panel_ran;
    return out;
}

VerificationReport report_from_json(const nlohmann::ordered_json& value) {
    VerificationReport report;
    report.passed = value.at("passed").get<bool>();
    for (const auto& entry : value.at("rule_results")) {
        RuleOutcome outcome;
        outcome.rule = entry.at("rule").get<std::string>();
        outcome.severity = entry.at("severity").get<std::string>() == "fatal" ? Severity::Fatal
                                                                              : Severity::Warning;
        outcome.passed = entry.at("passed").get<bool>();
        outcome.details = entry.at("details").get<std::string>();
        outcome.turns = entry.at("turns").get<std::vector<int>>();
        report.rule_results.push_back(std::move(outcome));
    }
    for (const auto& entry : value.at("model_results")) {
        PanelResult result;
        result.question_id = entry.at("id").get<std::string>();
        result.positive = entry.at("positive").get<bool>();
        result.rationale = entry.at("rationale").get<std::string>();
        report.model_results.push_back(std::move(result));
    }
    report.panel_ran = value.at("panel_ran").get<bool>();
    return report;
}

}  // namespace dialoggen
