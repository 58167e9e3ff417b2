#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dialoggen/backend.hpp"
#include "dialoggen/core.hpp"
#include "dialoggen/initializer.hpp"
#include "dialoggen/rng.hpp"
#include "dialoggen/templates.hpp"

namespace dialoggen {

/// Selection-probability floor. Stored weights stay exact so the decay
/// bookkeeping is testable; the floor only keeps a much-refined turn from
/// starving entirely.
inline constexpr double kWeightFloor = 1e-6;

struct InjectionPlan {
    InjectionKind kind;
    int target_index = 0;  // index in the trajectory at selection time
};

struct JudgeVerdict {
    bool accepted = false;
    bool refined_in_slot_a = false;
};

/// True when `index` can host the given injection: the role matches the
/// type's target contract, the turn was not created or edited by an earlier
/// injection, and type-specific preconditions hold (a following call for
/// clarification, a perturbable argument for error simulation, a removable
/// tool for tool awareness).
bool injection_target_eligible(const Trajectory& trajectory, const RefinementState& state,
                               InjectionKind kind, int index);

/// Tools that a tool-awareness injection at `user_index` may remove: initial
/// tools called only after that turn, so earlier calls stay valid against
/// the shrunken starting list.
std::vector<std::string> removable_tools(const Trajectory& trajectory, int user_index);

/// Stage 2: alternates complexity injection (mask-and-extend) with
/// reasonability refinement (mask-and-fill gated by a pairwise judger).
class Refiner {
public:
    Refiner(const TemplateSet& templates, const PromptExamples& examples,
            const GenerationConfig& config, Backend& backend)
        : templates_(templates), examples_(examples), config_(config), backend_(backend) {}

    /// Draws k in the configured range and picks k distinct injection types
    /// with distinct eligible targets; types without a target are skipped.
    std::vector<InjectionPlan> select_injections(const Trajectory& trajectory,
                                                 const RefinementState& state, Rng& rng) const;

    /// Applies one injection in place (turn splice, tool bookkeeping, state
    /// re-alignment, audit). Returns false when validation retries were
    /// exhausted and the trajectory was left untouched.
    bool inject(Instance& instance, InjectionKind kind, int target_index, int pre_edit_index,
                Rng& rng) const;

    /// Weighted non-adjacent mask draw; decays and marks the selected turns.
    std::vector<int> select_mask_set(RefinementState& state, const Trajectory& trajectory,
                                     Rng& rng) const;

    /// One mask-and-fill exchange; returns index -> replacement content.
    /// Throws ValidationExhausted when no structurally valid fill arrived.
    std::map<int, std::string> mask_and_fill(const Trajectory& trajectory,
                                             const std::vector<int>& mask,
                                             const std::string& instance_id) const;

    /// Pairwise judgement of original vs refined content for one masked turn,
    /// with random A/B slot assignment. Unparseable verdicts reject.
    JudgeVerdict judge(const Trajectory& trajectory, int index, const std::string& refined_content,
                       const std::string& instance_id, Rng& rng) const;

    /// Full stage-2 loop; never throws, failed sub-steps degrade to no-ops.
    void refine_loop(Instance& instance, Rng& rng) const;

private:
    void run_reasonability_pass(Instance& instance, Rng& rng) const;

    const TemplateSet& templates_;
    const PromptExamples& examples_;
    const GenerationConfig& config_;
    Backend& backend_;
};

}  // namespace dialoggen
