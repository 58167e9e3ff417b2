#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialoggen/backend.hpp"
#include "dialoggen/core.hpp"
#include "dialoggen/templates.hpp"

namespace dialoggen {

enum class Severity { Fatal, Warning };

std::string to_string(Severity severity);

struct RuleOutcome {
    std::string rule;
    Severity severity = Severity::Fatal;
    bool passed = false;
    std::string details;
    std::vector<int> turns;  // implicated turn indices

    bool operator==(const RuleOutcome&) const = default;
};

struct PanelResult {
    std::string question_id;
    bool positive = false;  // polarity normalized: positive = pass
    std::string rationale;

    bool operator==(const PanelResult&) const = default;
};

struct VerificationReport {
    std::vector<RuleOutcome> rule_results;
    std::vector<PanelResult> model_results;
    bool panel_ran = false;
    bool passed = false;

    bool has_fatal_failure() const;

    bool operator==(const VerificationReport&) const = default;
};

// ---------------------------------------------------------------------------
// Rule checks (pure functions of the trajectory; failures are outcomes)
// ---------------------------------------------------------------------------

/// Alternation, call-grammar and tool-output format compliance, empty
/// contents, and the empty call list "[]" (an assistant must call or speak).
std::vector<RuleOutcome> check_format(const Trajectory& trajectory);

/// Schema conformance of every call against the tool set in effect at its
/// turn: known tool, required/unknown parameters, value types, enum
/// membership. Integers pass where number is declared; nothing is coerced.
std::vector<RuleOutcome> check_calls(const Trajectory& trajectory);

/// Every ID-like string in call arguments must appear somewhere in the
/// strictly earlier turns (matched by containment; IDs may sit inside prose).
std::vector<RuleOutcome> check_hallucinated_ids(const Trajectory& trajectory);

/// Byte-identical assistant turns are fatal, as is a 20-token window
/// repeating three times inside one assistant turn. Identical consecutive
/// user turns are a warning.
std::vector<RuleOutcome> check_repetition(const Trajectory& trajectory);

/// Executable hook for one tool: takes the recorded call, returns the result
/// object. Errors thrown by the hook become fatal outcomes.
using ToolExecutor = std::function<nlohmann::ordered_json(const FunctionCall&)>;

/// Replays hooked calls and compares the produced result object's shape
/// (key set and value types) against the recorded tool output.
std::vector<RuleOutcome> check_executability(const Trajectory& trajectory,
                                             const std::map<std::string, ToolExecutor>& executors);

// ---------------------------------------------------------------------------
// Model-based panel
// ---------------------------------------------------------------------------

// The question id names both the template stage and the ledger tag; the
// polarity flag says which answer counts as positive.
using PanelQuestion = PanelQuestionConfig;

const std::vector<PanelQuestion>& default_panel();

class Verifier {
public:
    /// `templates` and `backend` may be null; the panel is then skipped
    /// regardless of config and only the rule checks run. A non-empty
    /// config.panel_questions replaces the built-in four.
    Verifier(const TemplateSet* templates, const GenerationConfig& config, Backend* backend)
        : templates_(templates), config_(config), backend_(backend),
          panel_(config.panel_questions.empty() ? default_panel() : config.panel_questions) {}

    void set_panel(std::vector<PanelQuestion> panel) { panel_ = std::move(panel); }

    /// Hooks for tools that can really be replayed; unhooked tools skip.
    void set_executors(std::map<std::string, ToolExecutor> executors) {
        executors_ = std::move(executors);
    }

    /// One independent request per sub-question; unparseable verdicts count
    /// as negative.
    std::vector<PanelResult> model_panel(const Trajectory& trajectory,
                                         const std::string& instance_id) const;

    /// Rules first; the panel runs only when no fatal rule failed.
    VerificationReport verify(const Instance& instance) const;

    /// Rule-only variant used when replaying external datasets.
    VerificationReport verify_rules_only(const Instance& instance) const;

private:
    VerificationReport run(const Instance& instance, bool allow_panel) const;

    const TemplateSet* templates_;
    const GenerationConfig& config_;
    Backend* backend_;
    std::vector<PanelQuestion> panel_;
    std::map<std::string, ToolExecutor> executors_;
};

// JSON round trip for emission alongside instances.
nlohmann::ordered_json report_to_json(const VerificationReport& report);
VerificationReport report_from_json(const nlohmann::ordered_json& value);

}  // namespace dialoggen
