#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "dialoggen/backend.hpp"
#include "dialoggen/config.hpp"
#include "dialoggen/core.hpp"
#include "dialoggen/initializer.hpp"
#include "dialoggen/json_io.hpp"
#include "dialoggen/refiner.hpp"
#include "dialoggen/templates.hpp"
#include "dialoggen/verifier.hpp"

namespace dialoggen {

struct RunStats {
    int requested = 0;
    int attempted = 0;
    int passed_verification = 0;
    double pass_rate = 0.0;
    std::uint64_t total_api_calls = 0;
    std::map<std::string, std::uint64_t> per_stage_calls;
    std::map<int, int> assistant_turn_histogram;  // over passing instances
    double mean_assistant_turns = 0.0;
    struct InjectionCounts {
        int attempted = 0;
        int accepted = 0;
    };
    std::map<std::string, InjectionCounts> injection_acceptance;
    bool budget_exhausted = false;
};

int count_assistant_turns(const Instance& instance);

// Instance line format: {id, tools, messages, task_plan, stats, verification},
// keys in exactly that order, one line per instance, newline-terminated.
ojson instance_to_json(const Instance& instance);
Instance instance_from_json(const ojson& value);

void emit_jsonl(const std::vector<Instance>& instances, const std::string& path);
std::vector<Instance> load_instances(const std::string& path);

ojson stats_to_json(const RunStats& stats);

/// End-to-end orchestration: shape sampling, task and trajectory
/// initialization, refinement, verification, JSONL output and stats.
class Pipeline {
public:
    explicit Pipeline(GenerationConfig config);
    Pipeline(GenerationConfig config, std::unique_ptr<Backend> backend);

    /// Generates until `n` instances pass verification (or the run call cap
    /// trips). Appends passing instances to `out_path`, writes
    /// `<out_path>.stats.json`, and returns the stats.
    RunStats run(int n, const std::string& out_path);

    /// Builds one instance end to end. Throws ValidationExhausted,
    /// CompositionError or BudgetExceeded when the instance must be dropped.
    Instance generate_instance(std::uint64_t attempt_index);

    Backend& backend() { return *backend_; }
    const GenerationConfig& config() const { return config_; }
    const TemplateSet& templates() const { return templates_; }
    const std::vector<ToolSpec>& tool_pool() const { return tool_pool_; }

    /// Observes every generated instance (passing or not) before writing;
    /// used by tests and the audit log writer.
    void set_instance_observer(std::function<void(const Instance&)> observer) {
        observer_ = std::move(observer);
    }

    void set_audit_path(std::string path) { audit_path_ = std::move(path); }

private:
    void write_stats(const RunStats& stats, const std::string& out_path) const;

    GenerationConfig config_;
    TemplateSet templates_;
    PromptExamples examples_;
    std::vector<ToolSpec> tool_pool_;
    std::unique_ptr<Backend> backend_;
    Initializer initializer_;
    Refiner refiner_;
    Verifier verifier_;
    std::function<void(const Instance&)> observer_;
    std::string audit_path_;
    std::mutex examples_mutex_;
};

}  // namespace dialoggen
