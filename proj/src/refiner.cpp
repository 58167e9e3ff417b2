#include "dialoggen/refiner.hpp"

#include <algorithm>
#include <set>

#include "dialoggen/fc_parser.hpp"
#include "dialoggen/json_io.hpp"

namespace dialoggen {

namespace {

constexpr double kGenerationTemperature = 0.7;
constexpr double kJudgeTemperature = 0.0;

struct InjectionShape {
    const char* template_name;
    const char* target_placeholder;
    Role expected_roles[3];
};

const InjectionShape& shape_for(InjectionKind kind) {
    static const InjectionShape clarification{
        "inject_clarification", "user_turn", {Role::User, Role::Assistant, Role::User}};
    static const InjectionShape tool_awareness{
        "inject_tool_awareness", "user_turn", {Role::User, Role::Assistant, Role::User}};
    static const InjectionShape error_simulation{
        "inject_error_simulation", "assistant_turn", {Role::Assistant, Role::Tool, Role::Assistant}};
    static const InjectionShape non_function_calling{
        "inject_non_function_calling", "user_turn", {Role::User, Role::Assistant, Role::User}};
    switch (kind) {
        case InjectionKind::Clarification: return clarification;
        case InjectionKind::ToolAwareness: return tool_awareness;
        case InjectionKind::ErrorSimulation: return error_simulation;
        case InjectionKind::NonFunctionCalling: return non_function_calling;
    }
    return clarification;
}

std::vector<Turn> non_system_turns(const Trajectory& trajectory) {
    std::vector<Turn> turns;
    for (const auto& turn : trajectory.turns) {
        if (turn.role != Role::System) {
            turns.push_back(turn);
        }
    }
    return turns;
}

bool call_has_perturbable_arg(const std::string& content) {
    try {
        for (const auto& call : fc::parse_calls(content)) {
            if (!call.args.empty()) {
                return true;
            }
        }
    } catch (const std::exception&) {
    }
    return false;
}

std::vector<const ToolSpec*> all_tools_except(const Trajectory& trajectory,
                                              const std::string& removed) {
    std::vector<const ToolSpec*> tools;
    for (const auto& tool : trajectory.tools) {
        if (tool.name != removed) {
            tools.push_back(&tool);
        }
    }
    for (const auto& added : trajectory.added_tools) {
        if (added.tool.name != removed) {
            tools.push_back(&added.tool);
        }
    }
    return tools;
}

/// Splices a 3-turn replacement over one turn, keeping per-turn state and
/// mid-conversation tool introduction points aligned.
void apply_replacement(Instance& instance, int target, const std::vector<Turn>& replacement) {
    instance.trajectory = splice_turns(instance.trajectory, target, 1, replacement);
    for (auto& added : instance.trajectory.added_tools) {
        if (added.turn_index > target) {
            added.turn_index += static_cast<int>(replacement.size()) - 1;
        }
    }
    auto& state = instance.refinement_state;
    state.apply_splice(target, 1, static_cast<int>(replacement.size()));
    for (std::size_t i = 0; i < replacement.size(); ++i) {
        state.turn_states[target + i].injected = true;
    }
}

std::vector<Turn> decode_three_turn_reply(const std::string& reply, const InjectionShape& shape) {
    const auto decoded = parse_json_reply(reply);
    if (!decoded || !decoded->is_array() || decoded->size() != 3) {
        throw ValidationError("reply must be a JSON array of exactly 3 turns");
    }
    std::vector<Turn> turns;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& item = (*decoded)[i];
        if (!item.is_object() || !item.contains("role") || !item.contains("content") ||
            !item.at("content").is_string()) {
            throw ValidationError("replacement turns need role and content strings");
        }
        const auto role = role_from_string(item.at("role").get<std::string>());
        if (!role || *role != shape.expected_roles[i]) {
            throw ValidationError("replacement turn " + std::to_string(i) + " must have role " +
                                  to_string(shape.expected_roles[i]));
        }
        const std::string content = item.at("content").get<std::string>();
        if (trim(content).empty()) {
            throw ValidationError("replacement turn " + std::to_string(i) + " is empty");
        }
        turns.push_back(Turn{*role, content});
    }
    return turns;
}

}  // namespace

std::vector<std::string> removable_tools(const Trajectory& trajectory, int user_index) {
    std::set<std::string> called_before;
    std::set<std::string> called_after;
    for (std::size_t i = 0; i < trajectory.turns.size(); ++i) {
        const Turn& turn = trajectory.turns[i];
        if (turn.role != Role::Assistant || classify_turn(turn) != TurnKind::AssistantCall) {
            continue;
        }
        for (const auto& call : fc::parse_calls(turn.content)) {
            if (static_cast<int>(i) < user_index) {
                called_before.insert(call.name);
            } else if (static_cast<int>(i) > user_index) {
                called_after.insert(call.name);
            }
        }
    }
    std::vector<std::string> removable;
    for (const auto& tool : trajectory.tools) {
        if (called_after.count(tool.name) && !called_before.count(tool.name)) {
            removable.push_back(tool.name);
        }
    }
    return removable;
}

bool injection_target_eligible(const Trajectory& trajectory, const RefinementState& state,
                               InjectionKind kind, int index) {
    const int size = static_cast<int>(trajectory.turns.size());
    if (index <= 0 || index >= size) {
        return false;
    }
    if (state.turn_states[index].injected) {
        return false;
    }
    const Turn& turn = trajectory.turns[index];
    switch (kind) {
        case InjectionKind::Clarification:
            return turn.role == Role::User && index + 1 < size &&
                   classify_turn(trajectory.turns[index + 1]) == TurnKind::AssistantCall;
        case InjectionKind::ToolAwareness:
            return turn.role == Role::User && !removable_tools(trajectory, index).empty();
        case InjectionKind::ErrorSimulation:
            return classify_turn(turn) == TurnKind::AssistantCall &&
                   call_has_perturbable_arg(turn.content);
        case InjectionKind::NonFunctionCalling:
            return turn.role == Role::User;
    }
    return false;
}

std::vector<InjectionPlan> Refiner::select_injections(const Trajectory& trajectory,
                                                      const RefinementState& state, Rng& rng) const {
    const int k = rng.uniform_int(config_.injection_count_range.min, config_.injection_count_range.max);

    std::vector<InjectionKind> kinds = {InjectionKind::Clarification, InjectionKind::ToolAwareness,
                                        InjectionKind::ErrorSimulation,
                                        InjectionKind::NonFunctionCalling};
    for (std::size_t i = kinds.size(); i-- > 1;) {
        std::swap(kinds[i], kinds[rng.uniform_int(0, static_cast<int>(i))]);
    }

    std::vector<InjectionPlan> plans;
    std::set<int> taken;
    for (const InjectionKind kind : kinds) {
        if (static_cast<int>(plans.size()) >= k) {
            break;
        }
        std::vector<int> eligible;
        for (int i = 1; i < static_cast<int>(trajectory.turns.size()); ++i) {
            if (!taken.count(i) && injection_target_eligible(trajectory, state, kind, i)) {
                eligible.push_back(i);
            }
        }
        if (eligible.empty()) {
            continue;  // reduces k for this trajectory
        }
        const int target = eligible[rng.uniform_int(0, static_cast<int>(eligible.size()) - 1)];
        plans.push_back({kind, target});
        taken.insert(target);
    }
    return plans;
}

bool Refiner::inject(Instance& instance, InjectionKind kind, int target_index, int pre_edit_index,
                     Rng& rng) const {
    auto& trajectory = instance.trajectory;
    auto& state = instance.refinement_state;
    const InjectionShape& shape = shape_for(kind);
    const Turn& target_turn = trajectory.turns[target_index];

    std::optional<ToolSpec> removed_tool;
    std::map<std::string, std::string> bindings;
    bindings["conversation"] = render_turns(non_system_turns(trajectory));
    bindings[shape.target_placeholder] = turn_to_json(target_turn).dump();

    switch (kind) {
        case InjectionKind::Clarification:
            bindings["example"] = examples_.clarification_example;
            break;
        case InjectionKind::ToolAwareness: {
            bindings["example"] = examples_.tool_awareness_example;
            const auto candidates = removable_tools(trajectory, target_index);
            if (candidates.empty()) {
                return false;
            }
            const std::string& name =
                candidates[rng.uniform_int(0, static_cast<int>(candidates.size()) - 1)];
            removed_tool = *trajectory.find_tool(name);
            bindings["removed_tool"] = tool_to_json(*removed_tool).dump();
            break;
        }
        case InjectionKind::ErrorSimulation:
            bindings["example"] = examples_.error_simulation_example;
            break;
        case InjectionKind::NonFunctionCalling:
            bindings["example"] = examples_.non_function_calling_example;
            break;
    }
    bindings["candidate_tools"] =
        render_tool_lines(all_tools_except(trajectory, removed_tool ? removed_tool->name : ""));

    ChatRequest request;
    request.messages = {{"user", templates_.get(shape.template_name).render(bindings)}};
    request.temperature = kGenerationTemperature;
    request.tag = std::string(shape.template_name);
    request.instance_id = instance.id;

    const std::uint64_t attempts_before = backend_.ledger().instance_attempted(instance.id);
    const std::string original_content = target_turn.content;

    std::vector<Turn> replacement;
    bool applied = true;
    try {
        replacement = complete_with_retry<std::vector<Turn>>(
            backend_, request,
            [&](const std::string& reply) {
                std::vector<Turn> turns = decode_three_turn_reply(reply, shape);
                if (kind == InjectionKind::NonFunctionCalling &&
                    turns[2].content != original_content) {
                    throw ValidationError("original user turn must be preserved verbatim");
                }
                if (kind == InjectionKind::ToolAwareness &&
                    turns[2].content.find(removed_tool->name) == std::string::npos) {
                    throw ValidationError("reintroduced tool description missing from user turn");
                }
                if (kind == InjectionKind::ErrorSimulation) {
                    try {
                        fc::parse_tool_output(turns[1].content);
                    } catch (const std::exception& err) {
                        throw ValidationError(std::string("error tool turn malformed: ") + err.what());
                    }
                }
                const Trajectory probe = splice_turns(trajectory, target_index, 1, turns);
                if (!check_alternation(probe).empty()) {
                    throw ValidationError("replacement breaks alternation");
                }
                return turns;
            },
            config_.llm_retry_limit);
    } catch (const ValidationExhausted&) {
        applied = false;
    }

    const std::uint64_t attempts =
        backend_.ledger().instance_attempted(instance.id) - attempts_before;

    if (applied) {
        apply_replacement(instance, target_index, replacement);
        if (kind == InjectionKind::ToolAwareness) {
            auto& tools = instance.trajectory.tools;
            tools.erase(std::remove_if(tools.begin(), tools.end(),
                                       [&](const ToolSpec& t) { return t.name == removed_tool->name; }),
                        tools.end());
            instance.trajectory.added_tools.push_back(AddedTool{*removed_tool, target_index + 2});
            // The introduction turn is final by construction: pinned away from
            // masking, it counts as refined for the termination condition.
            state.turn_states[target_index + 2].refined = true;
            // The system turn advertises the initial list, so it shrinks too.
            instance.trajectory.turns[0].content =
                templates_.get("system_prompt").render({{"candidate_tools", render_tool_lines(tools)}});
        }

        InjectionRecord record;
        record.injection_type = kind;
        record.target_turn_index = target_index;
        record.pre_edit_target_index = pre_edit_index;
        record.inserted_turn_indices = {target_index, target_index + 1, target_index + 2};
        record.timestamp_step = state.step_counter;
        state.injection_log.push_back(record);
        state.injections_done += 1;
    }

    EditRecord audit;
    audit.step = state.step_counter++;
    audit.kind = to_string(kind);
    audit.targets = {target_index};
    audit.accepted = {applied};
    audit.attempts = attempts;
    state.audit_log.push_back(std::move(audit));
    return applied;
}

std::vector<int> Refiner::select_mask_set(RefinementState& state, const Trajectory& trajectory,
                                          Rng& rng) const {
    const int size = static_cast<int>(trajectory.turns.size());
    const int count = rng.uniform_int(config_.mask_count_range.min, config_.mask_count_range.max);

    // Tool-introduction turns are structural: rewriting one would orphan
    // every later call to the introduced tool. They are never masked.
    std::set<int> pinned;
    for (const auto& added : trajectory.added_tools) {
        pinned.insert(added.turn_index);
    }

    std::set<int> chosen;
    for (int draw = 0; draw < count; ++draw) {
        std::vector<double> weights(size, 0.0);
        bool any = false;
        for (int i = 1; i < size; ++i) {
            if (pinned.count(i) || chosen.count(i) || chosen.count(i - 1) || chosen.count(i + 1)) {
                continue;  // non-adjacent by construction
            }
            weights[i] = std::max(state.turn_states[i].weight, kWeightFloor);
            any = true;
        }
        if (!any) {
            break;
        }
        chosen.insert(rng.weighted_index(weights));
    }

    std::vector<int> mask(chosen.begin(), chosen.end());
    for (int index : mask) {
        auto& turn_state = state.turn_states[index];
        turn_state.weight *= config_.weight_decay_factor;
        turn_state.times_selected += 1;
        turn_state.refined = true;
    }
    return mask;
}

std::map<int, std::string> Refiner::mask_and_fill(const Trajectory& trajectory,
                                                  const std::vector<int>& mask,
                                                  const std::string& instance_id) const {
    // Placeholders are assigned in turn order; the map below goes back from
    // placeholder to trajectory index.
    std::map<std::string, int> placeholder_to_index;
    std::vector<Turn> rendered;
    std::size_t next_placeholder = 0;
    for (std::size_t i = 1; i < trajectory.turns.size(); ++i) {
        Turn turn = trajectory.turns[i];
        if (std::find(mask.begin(), mask.end(), static_cast<int>(i)) != mask.end()) {
            const std::string placeholder = mask_placeholder(next_placeholder++);
            placeholder_to_index[placeholder] = static_cast<int>(i);
            turn.content = placeholder;
        }
        rendered.push_back(std::move(turn));
    }

    const std::string prompt = templates_.get("mask_and_fill").render({
        {"candidate_tools", render_tool_lines(all_tools_except(trajectory, ""))},
        {"conversation", render_turns(rendered)},
    });

    ChatRequest request;
    request.messages = {{"user", prompt}};
    request.temperature = kGenerationTemperature;
    request.tag = "mask_fill";
    request.instance_id = instance_id;

    return complete_with_retry<std::map<int, std::string>>(
        backend_, request,
        [&](const std::string& reply) {
            const auto decoded = parse_json_reply(reply);
            if (!decoded || !decoded->is_object()) {
                throw ValidationError("fill reply is not a JSON object");
            }
            if (decoded->size() != placeholder_to_index.size()) {
                throw ValidationError("fill reply must map exactly the issued placeholders");
            }
            std::map<int, std::string> fills;
            for (const auto& [placeholder, index] : placeholder_to_index) {
                if (!decoded->contains(placeholder) || !(*decoded)[placeholder].is_string()) {
                    throw ValidationError("missing fill for placeholder '" + placeholder + "'");
                }
                const std::string content = (*decoded)[placeholder].get<std::string>();
                if (trim(content).empty()) {
                    throw ValidationError("empty fill for placeholder '" + placeholder + "'");
                }
                // The fill must keep the turn's structural kind so alternation
                // survives the splice.
                const Turn& original = trajectory.turns[index];
                const bool next_is_tool =
                    index + 1 < static_cast<int>(trajectory.turns.size()) &&
                    trajectory.turns[index + 1].role == Role::Tool;
                if (original.role == Role::Tool) {
                    try {
                        fc::parse_tool_output(content);
                    } catch (const std::exception& err) {
                        throw ValidationError("tool fill malformed: " + std::string(err.what()));
                    }
                } else if (original.role == Role::Assistant) {
                    bool is_calls = false;
                    try {
                        is_calls = !fc::parse_calls(content).empty();
                    } catch (const std::exception&) {
                        is_calls = false;
                    }
                    if (next_is_tool && !is_calls) {
                        throw ValidationError("fill before a tool turn must be a call list");
                    }
                    if (!next_is_tool && fc::looks_like_calls(content)) {
                        throw ValidationError("fill for a summary turn must be plain text");
                    }
                }
                fills[index] = content;
            }
            return fills;
        },
        config_.llm_retry_limit);
}

JudgeVerdict Refiner::judge(const Trajectory& trajectory, int index,
                            const std::string& refined_content, const std::string& instance_id,
                            Rng& rng) const {
    std::vector<Turn> history;
    for (int i = 1; i < index; ++i) {
        history.push_back(trajectory.turns[i]);
    }
    const Turn original = trajectory.turns[index];
    Turn refined = original;
    refined.content = refined_content;

    JudgeVerdict verdict;
    verdict.refined_in_slot_a = rng.coin();
    const Turn& slot_a = verdict.refined_in_slot_a ? refined : original;
    const Turn& slot_b = verdict.refined_in_slot_a ? original : refined;

    const std::string prompt = templates_.get("judge").render({
        {"candidate_tools", render_tool_lines(all_tools_except(trajectory, ""))},
        {"conversation", history.empty() ? "[]" : render_turns(history)},
        {"trajectory_a", render_turns(std::span<const Turn>(&slot_a, 1))},
        {"trajectory_b", render_turns(std::span<const Turn>(&slot_b, 1))},
    });

    ChatRequest request;
    request.messages = {{"user", prompt}};
    request.temperature = kJudgeTemperature;
    request.max_output_tokens = 1024;
    request.tag = "judge";
    request.instance_id = instance_id;

    try {
        const std::string letter = complete_with_retry<std::string>(
            backend_, request,
            [](const std::string& reply) {
                const auto decoded = parse_json_reply(reply);
                if (!decoded || !decoded->is_object() || !decoded->contains("judgement") ||
                    !decoded->contains("think")) {
                    throw ValidationError("judgement reply must carry think and judgement");
                }
                const std::string choice = trim(decoded->at("judgement").get<std::string>());
                if (choice != "A" && choice != "B") {
                    throw ValidationError("judgement must be A or B");
                }
                return choice;
            },
            config_.llm_retry_limit);
        verdict.accepted = (letter == "A") == verdict.refined_in_slot_a;
    } catch (const ValidationExhausted&) {
        verdict.accepted = false;  // keep the original
    }
    return verdict;
}

void Refiner::run_reasonability_pass(Instance& instance, Rng& rng) const {
    auto& state = instance.refinement_state;
    const std::uint64_t attempts_before = backend_.ledger().instance_attempted(instance.id);

    const std::vector<int> mask = select_mask_set(state, instance.trajectory, rng);
    EditRecord audit;
    audit.step = state.step_counter++;
    audit.kind = "refinement_pass";
    audit.targets = mask;

    if (!mask.empty()) {
        std::map<int, std::string> fills;
        bool have_fills = true;
        try {
            fills = mask_and_fill(instance.trajectory, mask, instance.id);
        } catch (const ValidationExhausted&) {
            have_fills = false;  // pass aborted, trajectory unchanged
        }

        if (have_fills) {
            Trajectory updated = instance.trajectory;
            for (int index : mask) {
                const JudgeVerdict verdict =
                    judge(instance.trajectory, index, fills.at(index), instance.id, rng);
                audit.accepted.push_back(verdict.accepted);
                if (verdict.accepted) {
                    updated.turns[index].content = fills.at(index);
                }
            }
            if (check_alternation(updated).empty()) {
                instance.trajectory = std::move(updated);
            } else {
                // Kind-preserving fills cannot break alternation; if one does,
                // drop the whole pass.
                std::fill(audit.accepted.begin(), audit.accepted.end(), false);
            }
        } else {
            audit.accepted.assign(mask.size(), false);
        }
    }

    state.refinement_passes_done += 1;
    audit.attempts = backend_.ledger().instance_attempted(instance.id) - attempts_before;
    state.audit_log.push_back(std::move(audit));
}

void Refiner::refine_loop(Instance& instance, Rng& rng) const {
    auto& state = instance.refinement_state;
    if (state.turn_states.size() != instance.trajectory.turns.size()) {
        state.turn_states.assign(instance.trajectory.turns.size(), TurnState{});
    }
    if (instance.trajectory.turns.size() < 2) {
        return;  // nothing maskable
    }

    std::vector<InjectionPlan> plans = select_injections(instance.trajectory, state, rng);
    std::sort(plans.begin(), plans.end(),
              [](const InjectionPlan& a, const InjectionPlan& b) {
                  return a.target_index < b.target_index;
              });

    const auto passes_left = [&] {
        return state.refinement_passes_done < config_.max_refinement_passes && !state.all_refined();
    };

    int shift = 0;
    for (const InjectionPlan& plan : plans) {
        const int adjusted = plan.target_index + shift;
        if (inject(instance, plan.kind, adjusted, plan.target_index, rng)) {
            shift += 2;  // one turn became three
        }
        if (passes_left()) {
            run_reasonability_pass(instance, rng);
        }
    }
    while (passes_left()) {
        run_reasonability_pass(instance, rng);
    }

    instance.api_call_count = backend_.ledger().instance_attempted(instance.id);
}

}  // namespace dialoggen
