#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace dialoggen {

// ---------------------------------------------------------------------------
// Roles and turns
// ---------------------------------------------------------------------------

enum class Role { System, User, Assistant, Tool };

/// Derived classification of a turn. An assistant turn is AssistantCall iff
/// its content parses under the bracketed call grammar, AssistantText
/// otherwise; the other roles map one-to-one.
enum class TurnKind { UserMessage, AssistantCall, AssistantText, ToolOutput, System };

std::string to_string(Role role);
std::string to_string(TurnKind kind);

/// Parses one of the four accepted role strings; anything else is rejected.
std::optional<Role> role_from_string(std::string_view text);

struct Turn {
    Role role;
    std::string content;

    bool operator==(const Turn&) const = default;
};

// ---------------------------------------------------------------------------
// Tool schemas
// ---------------------------------------------------------------------------

enum class ParamType { String, Integer, Number, Boolean, Array, Object, Enum };

std::string to_string(ParamType type);
std::optional<ParamType> param_type_from_string(std::string_view text);

struct ParamSpec {
    std::string name;
    ParamType type = ParamType::String;
    bool required = false;
    std::string description;
    std::vector<std::string> enum_values;  // non-empty iff type == Enum

    bool operator==(const ParamSpec&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ParamSpec> parameters;  // parameter names unique

    const ParamSpec* find_param(std::string_view param_name) const;

    bool operator==(const ToolSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Call argument values
// ---------------------------------------------------------------------------

/// Value domain of call arguments: string, integer, real, boolean, null,
/// array, or object. Object members keep insertion order so a value
/// round-trips the call grammar losslessly.
class ParamValue {
public:
    using Array = std::vector<ParamValue>;
    using Object = std::vector<std::pair<std::string, ParamValue>>;

    ParamValue() : value_(nullptr) {}
    ParamValue(std::nullptr_t) : value_(nullptr) {}
    ParamValue(bool b) : value_(b) {}
    ParamValue(std::int64_t i) : value_(i) {}
    ParamValue(int i) : value_(static_cast<std::int64_t>(i)) {}
    ParamValue(double d) : value_(d) {}
    ParamValue(std::string s) : value_(std::move(s)) {}
    ParamValue(const char* s) : value_(std::string(s)) {}
    ParamValue(Array a) : value_(std::move(a)) {}
    ParamValue(Object o) : value_(std::move(o)) {}

    bool is_null() const { return std::holds_alternative<std::nullptr_t>(value_); }
    bool is_bool() const { return std::holds_alternative<bool>(value_); }
    bool is_integer() const { return std::holds_alternative<std::int64_t>(value_); }
    bool is_real() const { return std::holds_alternative<double>(value_); }
    bool is_string() const { return std::holds_alternative<std::string>(value_); }
    bool is_array() const { return std::holds_alternative<Array>(value_); }
    bool is_object() const { return std::holds_alternative<Object>(value_); }

    bool as_bool() const { return std::get<bool>(value_); }
    std::int64_t as_integer() const { return std::get<std::int64_t>(value_); }
    double as_real() const { return std::get<double>(value_); }
    const std::string& as_string() const { return std::get<std::string>(value_); }
    const Array& as_array() const { return std::get<Array>(value_); }
    const Object& as_object() const { return std::get<Object>(value_); }

    bool operator==(const ParamValue&) const = default;

private:
    std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, Array, Object> value_;
};

/// One parsed assistant action: a tool name plus an ordered argument map.
struct FunctionCall {
    std::string name;
    std::vector<std::pair<std::string, ParamValue>> args;  // argument names unique

    const ParamValue* find_arg(std::string_view arg_name) const;

    bool operator==(const FunctionCall&) const = default;
};

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

/// A tool made available mid-conversation (tool-awareness injection): the
/// spec becomes callable from `turn_index` onward.
struct AddedTool {
    ToolSpec tool;
    int turn_index = 0;

    bool operator==(const AddedTool&) const = default;
};

/// Ordered turns forming one conversation plus the tools available to it.
/// `tools` is the initial set (what the system turn advertises); `added_tools`
/// records mid-conversation introductions.
struct Trajectory {
    std::vector<Turn> turns;
    std::vector<ToolSpec> tools;
    std::vector<AddedTool> added_tools;

    /// Tools callable at `turn_index`: the initial set plus every added tool
    /// whose introduction point is at or before that turn.
    std::vector<const ToolSpec*> tools_in_effect_at(int turn_index) const;

    const ToolSpec* find_tool(std::string_view tool_name) const;

    bool operator==(const Trajectory&) const = default;
};

// ---------------------------------------------------------------------------
// Task plan
// ---------------------------------------------------------------------------

struct Subtask {
    std::string description;
    std::vector<std::string> required_tools;
    int step_count = 1;

    bool operator==(const Subtask&) const = default;
};

struct TaskPlan {
    std::vector<Subtask> subtasks;

    bool operator==(const TaskPlan&) const = default;
};

// ---------------------------------------------------------------------------
// Refinement bookkeeping
// ---------------------------------------------------------------------------

enum class InjectionKind { Clarification, ToolAwareness, ErrorSimulation, NonFunctionCalling };

std::string to_string(InjectionKind kind);
std::optional<InjectionKind> injection_kind_from_string(std::string_view text);

/// Log entry for one applied complexity injection. Indices refer to positions
/// after the edit; `pre_edit_target_index` keeps the original position for
/// audit since splices shift later turns.
struct InjectionRecord {
    InjectionKind injection_type;
    int target_turn_index = 0;
    int pre_edit_target_index = 0;
    std::vector<int> inserted_turn_indices;
    int timestamp_step = 0;
};

/// Per-turn refinement state, index-aligned with the trajectory turns.
/// Weights stay exact (initial * decay^selections); the starvation floor is
/// applied at probability time, not stored.
struct TurnState {
    double weight = 1.0;
    bool refined = false;
    bool injected = false;
    int times_selected = 0;
};

/// One entry of the per-instance refinement audit log.
struct EditRecord {
    int step = 0;
    std::string kind;          // "clarification", ..., or "refinement_pass"
    std::vector<int> targets;  // turn indices at edit time
    std::vector<bool> accepted;
    std::uint64_t attempts = 0;  // backend attempts consumed by this edit
};

struct RefinementState {
    std::vector<TurnState> turn_states;
    std::vector<InjectionRecord> injection_log;
    std::vector<EditRecord> audit_log;
    int injections_done = 0;
    int refinement_passes_done = 0;
    int step_counter = 0;

    /// Re-aligns per-turn state after turns [begin, begin+removed) were
    /// replaced by `inserted` fresh turns. New turns enter unrefined at
    /// weight 1.0.
    void apply_splice(int begin, int removed, int inserted);

    bool all_refined() const;  // over non-system turns (index 0 is system)
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct IntRange {
    int min = 0;
    int max = 0;

    bool contains(int v) const { return v >= min && v <= max; }
    bool operator==(const IntRange&) const = default;
};

enum class BackendKind { Http, Mock };

struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::string endpoint;                       // http: base URL
    std::string model;                          // http: model name
    std::string api_key_env = "DIALOGGEN_API_KEY";
    std::string script_path;                    // mock: optional scripted responses
};

/// One verification sub-question: `id` names both the template file and the
/// ledger tag; `pass_answer_yes` sets which answer counts as positive.
struct PanelQuestionConfig {
    std::string id;
    bool pass_answer_yes = true;

    bool operator==(const PanelQuestionConfig&) const = default;
};

struct GenerationConfig {
    IntRange subtask_range{2, 5};
    IntRange steps_range{1, 6};
    IntRange tools_per_instance{5, 8};  // candidate tools sampled from the pool
    IntRange injection_count_range{1, 3};
    int max_refinement_passes = 5;
    IntRange mask_count_range{1, 3};
    double weight_decay_factor = 0.5;
    int llm_retry_limit = 3;
    std::uint64_t seed = 0;
    std::string tool_pool_path;
    std::string templates_dir;
    std::string prompt_examples_path;
    BackendConfig backend;
    int instance_call_cap = 200;   // per-instance hard cap on backend calls
    std::uint64_t run_call_cap = 0;  // 0 = unlimited
    int workers = 1;
    bool panel_enabled = true;
    std::vector<PanelQuestionConfig> panel_questions;  // empty = built-in default panel
    bool enrich_examples = false;

    void validate() const;  // throws ConfigError on bad ranges
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Instance
// ---------------------------------------------------------------------------

struct VerificationReport;  // verifier.hpp

struct InstanceStats {
    int assistant_turns = 0;
    std::uint64_t api_calls = 0;

    bool operator==(const InstanceStats&) const = default;
};

struct Instance {
    std::string id;
    TaskPlan task_plan;
    Trajectory trajectory;
    RefinementState refinement_state;
    std::shared_ptr<const VerificationReport> verification;  // set after verify
    std::uint64_t api_call_count = 0;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Pure classification: parse failure never raises, it just means the
/// assistant spoke instead of calling.
TurnKind classify_turn(const Turn& turn);

struct AlternationViolation {
    int index = 0;
    std::string rule;

    bool operator==(const AlternationViolation&) const = default;
};

/// Checks the dialogue alternation invariants: system only at index 0, the
/// first non-system turn is a user turn, assistant calls pair with tool
/// outputs, every observation (tool output or user message) is answered by
/// an assistant turn, assistant text hands back to the user, and the
/// conversation ends on an assistant turn. One violation per offending index.
std::vector<AlternationViolation> check_alternation(const Trajectory& trajectory);

/// Replaces turns [index, index+removed) with `replacement`, returning an
/// edited copy. Core types stay immutable-after-construction; edits build
/// new values.
Trajectory splice_turns(const Trajectory& trajectory, int index, int removed,
                        const std::vector<Turn>& replacement);

std::string trim(std::string_view text);

}  // namespace dialoggen
