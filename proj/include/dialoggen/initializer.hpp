#pragma once

#include <string>
#include <vector>

#include "dialoggen/backend.hpp"
#include "dialoggen/core.hpp"
#include "dialoggen/rng.hpp"
#include "dialoggen/templates.hpp"

namespace dialoggen {

struct CompositionError : std::runtime_error {
    explicit CompositionError(const std::string& what) : std::runtime_error(what) {}
};

/// Reference snippets bound into the prompts: task examples rotate
/// round-robin, the rest are fixed exemplars per stage.
struct PromptExamples {
    std::vector<std::string> task_examples;
    std::string trajectory_example;
    std::string clarification_example;
    std::string tool_awareness_example;
    std::string error_simulation_example;
    std::string non_function_calling_example;

    static PromptExamples load_from_file(const std::string& path);
};

struct TaskPlanShape {
    int subtask_count = 0;
    std::vector<int> steps;
};

/// Draws the subtask count and per-subtask step budgets uniformly from the
/// configured ranges.
TaskPlanShape sample_task_plan_shape(const GenerationConfig& config, Rng& rng);

/// Stage 1: builds the task plan and the coarse trajectory skeleton by
/// composing per-subtask fragments sequentially.
class Initializer {
public:
    Initializer(const TemplateSet& templates, const PromptExamples& examples,
                const GenerationConfig& config, Backend& backend)
        : templates_(templates), examples_(examples), config_(config), backend_(backend) {}

    /// One subtask description via the task-init prompt. `examples_cursor`
    /// selects the rotation window for {examples}.
    Subtask init_task(const std::vector<ToolSpec>& tools, const std::vector<Subtask>& completed,
                      int step_number, const std::string& instance_id,
                      std::size_t examples_cursor) const;

    /// One sub-trajectory fragment: [user, (call, tool) x steps, summary].
    /// The validator enforces that shape, the role contract, and per-turn
    /// parseability; structurally broken responses are retried.
    std::vector<Turn> init_subtrajectory(const Subtask& subtask, const std::vector<ToolSpec>& tools,
                                         const std::vector<Turn>& history,
                                         const std::string& instance_id) const;

    /// Concatenates fragments behind a freshly rendered system turn and
    /// verifies the assembled dialogue alternates properly.
    Trajectory compose_skeleton(const std::vector<std::vector<Turn>>& fragments,
                                const std::vector<ToolSpec>& tools) const;

    /// System-turn content for a given initial tool list (re-rendered when a
    /// tool-awareness injection shrinks the list).
    std::string render_system_turn(const std::vector<ToolSpec>& tools) const;

private:
    const TemplateSet& templates_;
    const PromptExamples& examples_;
    const GenerationConfig& config_;
    Backend& backend_;
};

/// Validates one traj-init reply; returns the decoded fragment or throws
/// ValidationError naming the violations. Exposed for direct testing.
std::vector<Turn> validate_fragment_reply(const std::string& reply, int expected_steps);

/// {current_task} binding: the description plus the step budget line the
/// fragment generator must honor.
std::string render_current_task(const Subtask& subtask);

}  // namespace dialoggen
