#include "dialoggen/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "dialoggen/fc_parser.hpp"
#include "dialoggen/rng.hpp"

namespace dialoggen {

int count_assistant_turns(const Instance& instance) {
    int count = 0;
    for (const auto& turn : instance.trajectory.turns) {
        if (turn.role == Role::Assistant) {
            ++count;
        }
    }
    return count;
}

ojson instance_to_json(const Instance& instance) {
    ojson out;
    out["id"] = instance.id;

    ojson tools = ojson::array();
    for (const auto& tool : instance.trajectory.tools) {
        tools.push_back(tool_to_json(tool));
    }
    for (const auto& added : instance.trajectory.added_tools) {
        ojson entry = tool_to_json(added.tool);
        entry["available_from_turn"] = added.turn_index;
        tools.push_back(std::move(entry));
    }
    out["tools"] = std::move(tools);

    ojson messages = ojson::array();
    for (const auto& turn : instance.trajectory.turns) {
        messages.push_back(turn_to_json(turn));
    }
    out["messages"] = std::move(messages);

    ojson subtasks = ojson::array();
    for (const auto& subtask : instance.task_plan.subtasks) {
        ojson entry;
        entry["description"] = subtask.description;
        entry["required_tools"] = subtask.required_tools;
        entry["step_count"] = subtask.step_count;
        subtasks.push_back(std::move(entry));
    }
    out["task_plan"] = ojson{{"subtasks", std::move(subtasks)}};

    ojson stats;
    stats["assistant_turns"] = count_assistant_turns(instance);
    stats["api_calls"] = instance.api_call_count;
    out["stats"] = std::move(stats);

    out["verification"] = instance.verification ? report_to_json(*instance.verification)
                                                : ojson(nullptr);
    return out;
}

Instance instance_from_json(const ojson& value) {
    Instance instance;
    instance.id = value.at("id").get<std::string>();

    for (const auto& entry : value.at("tools")) {
        ToolSpec tool = tool_from_json(entry);
        if (entry.contains("available_from_turn")) {
            instance.trajectory.added_tools.push_back(
                AddedTool{std::move(tool), entry.at("available_from_turn").get<int>()});
        } else {
            instance.trajectory.tools.push_back(std::move(tool));
        }
    }
    for (const auto& entry : value.at("messages")) {
        instance.trajectory.turns.push_back(turn_from_json(entry));
    }
    for (const auto& entry : value.at("task_plan").at("subtasks")) {
        Subtask subtask;
        subtask.description = entry.at("description").get<std::string>();
        subtask.required_tools = entry.at("required_tools").get<std::vector<std::string>>();
        subtask.step_count = entry.at("step_count").get<int>();
        instance.task_plan.subtasks.push_back(std::move(subtask));
    }
    instance.api_call_count = value.at("stats").at("api_calls").get<std::uint64_t>();
    if (value.contains("verification") && !value.at("verification").is_null()) {
        instance.verification =
            std::make_shared<const VerificationReport>(report_from_json(value.at("verification")));
    }
    return instance;
}

void emit_jsonl(const std::vector<Instance>& instances, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + path);
    }
    for (const auto& instance : instances) {
        out << instance_to_json(instance).dump() << '\n';
        if (!out) {
            throw std::runtime_error("write failed: " + path);
        }
    }
}

std::vector<Instance> load_instances(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open instance file: " + path);
    }
    std::vector<Instance> instances;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        try {
            instances.push_back(instance_from_json(ojson::parse(line)));
        } catch (const std::exception& err) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + err.what());
        }
    }
    return instances;
}

ojson stats_to_json(const RunStats& stats) {
    ojson out;
    out["requested"] = stats.requested;
    out["attempted"] = stats.attempted;
    out["passed_verification"] = stats.passed_verification;
    out["pass_rate"] = stats.pass_rate;
    out["total_api_calls"] = stats.total_api_calls;
    ojson per_stage = ojson::object();
    for (const auto& [tag, calls] : stats.per_stage_calls) {
        per_stage[tag] = calls;
    }
    out["per_stage_calls"] = std::move(per_stage);
    ojson histogram = ojson::object();
    for (const auto& [turns, frequency] : stats.assistant_turn_histogram) {
        histogram[std::to_string(turns)] = frequency;
    }
    out["assistant_turn_histogram"] = std::move(histogram);
    out["mean_assistant_turns"] = stats.mean_assistant_turns;
    ojson injections = ojson::object();
    for (const auto& [kind, counts] : stats.injection_acceptance) {
        injections[kind] = ojson{{"attempted", counts.attempted}, {"accepted", counts.accepted}};
    }
    out["injection_acceptance"] = std::move(injections);
    out["budget_exhausted"] = stats.budget_exhausted;
    return out;
}

Pipeline::Pipeline(GenerationConfig config)
    : Pipeline(std::move(config), nullptr) {}

namespace {

std::vector<std::string> panel_stage_names(const GenerationConfig& config) {
    std::vector<std::string> names;
    for (const auto& question : config.panel_questions) {
        names.push_back(question.id);
    }
    return names;
}

}  // namespace

Pipeline::Pipeline(GenerationConfig config, std::unique_ptr<Backend> backend)
    : config_(std::move(config)),
      templates_(TemplateSet::load_from_dir(config_.templates_dir, panel_stage_names(config_))),
      examples_(PromptExamples::load_from_file(config_.prompt_examples_path)),
      tool_pool_(load_tool_pool(config_.tool_pool_path)),
      backend_(backend ? std::move(backend) : make_backend(config_)),
      initializer_(templates_, examples_, config_, *backend_),
      refiner_(templates_, examples_, config_, *backend_),
      verifier_(&templates_, config_, backend_.get()) {
    config_.validate();
    if (tool_pool_.empty()) {
        throw ConfigError("tool pool is empty");
    }
}

Instance Pipeline::generate_instance(std::uint64_t attempt_index) {
    Instance instance;
    {
        char id[32];
        std::snprintf(id, sizeof(id), "inst-%06llu",
                      static_cast<unsigned long long>(attempt_index + 1));
        instance.id = id;
    }
    Rng rng(derive_seed(config_.seed, attempt_index));

    // Candidate tool list for this instance: sampled without replacement.
    const int want = std::min<int>(
        rng.uniform_int(config_.tools_per_instance.min, config_.tools_per_instance.max),
        static_cast<int>(tool_pool_.size()));
    std::vector<int> order(tool_pool_.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = static_cast<int>(i);
    }
    for (std::size_t i = order.size(); i-- > 1;) {
        std::swap(order[i], order[rng.uniform_int(0, static_cast<int>(i))]);
    }
    std::vector<ToolSpec> tools;
    for (int i = 0; i < want; ++i) {
        tools.push_back(tool_pool_[order[i]]);
    }

    const TaskPlanShape shape = sample_task_plan_shape(config_, rng);

    std::vector<Subtask> completed;
    std::vector<std::vector<Turn>> fragments;
    std::vector<Turn> history;
    for (int i = 0; i < shape.subtask_count; ++i) {
        std::size_t cursor;
        {
            std::lock_guard lock(examples_mutex_);
            cursor = (attempt_index + static_cast<std::size_t>(i)) % examples_.task_examples.size();
        }
        Subtask subtask =
            initializer_.init_task(tools, completed, shape.steps[i], instance.id, cursor);
        std::vector<Turn> fragment =
            initializer_.init_subtrajectory(subtask, tools, history, instance.id);
        history.insert(history.end(), fragment.begin(), fragment.end());
        fragments.push_back(std::move(fragment));
        completed.push_back(std::move(subtask));
    }

    instance.task_plan.subtasks = std::move(completed);
    instance.trajectory = initializer_.compose_skeleton(fragments, tools);
    instance.refinement_state.turn_states.assign(instance.trajectory.turns.size(), TurnState{});

    refiner_.refine_loop(instance, rng);

    instance.verification =
        std::make_shared<const VerificationReport>(verifier_.verify(instance));
    instance.api_call_count = backend_->ledger().instance_attempted(instance.id);
    return instance;
}

void Pipeline::write_stats(const RunStats& stats, const std::string& out_path) const {
    std::ofstream out(out_path + ".stats.json", std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open stats file: " + out_path + ".stats.json");
    }
    out << stats_to_json(stats).dump(2) << '\n';
}

RunStats Pipeline::run(int n, const std::string& out_path) {
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open output file: " + out_path);
    }
    std::unique_ptr<std::ofstream> audit_out;
    if (!audit_path_.empty()) {
        audit_out = std::make_unique<std::ofstream>(audit_path_, std::ios::binary | std::ios::trunc);
    }

    RunStats stats;
    stats.requested = n;

    std::atomic<std::uint64_t> next_attempt{0};
    std::atomic<int> accepted{0};
    std::atomic<bool> stop{false};
    std::mutex sink_mutex;

    auto worker = [&] {
        while (!stop.load()) {
            if (accepted.load() >= n) {
                break;
            }
            const std::uint64_t attempt = next_attempt.fetch_add(1);
            Instance instance;
            try {
                instance = generate_instance(attempt);
            } catch (const BudgetExceeded& err) {
                std::lock_guard lock(sink_mutex);
                if (err.scope == BudgetExceeded::Scope::Run) {
                    stats.budget_exhausted = true;
                    stop.store(true);
                    break;
                }
                ++stats.attempted;
                continue;  // instance dropped, keep generating
            } catch (const ScriptExhausted&) {
                std::lock_guard lock(sink_mutex);
                stop.store(true);  // scripted mock ran dry: finish with partial output
                break;
            } catch (const ValidationExhausted&) {
                std::lock_guard lock(sink_mutex);
                ++stats.attempted;
                continue;
            } catch (const CompositionError&) {
                std::lock_guard lock(sink_mutex);
                ++stats.attempted;
                continue;
            }

            std::lock_guard lock(sink_mutex);
            ++stats.attempted;
            for (const auto& record : instance.refinement_state.audit_log) {
                if (record.kind == "refinement_pass") {
                    continue;
                }
                auto& counts = stats.injection_acceptance[record.kind];
                counts.attempted += 1;
                counts.accepted += record.accepted.at(0) ? 1 : 0;
            }
            if (observer_) {
                observer_(instance);
            }
            if (audit_out) {
                ojson audit;
                audit["id"] = instance.id;
                ojson edits = ojson::array();
                for (const auto& record : instance.refinement_state.audit_log) {
                    ojson entry;
                    entry["step"] = record.step;
                    entry["kind"] = record.kind;
                    entry["targets"] = record.targets;
                    entry["accepted"] = record.accepted;
                    entry["attempts"] = record.attempts;
                    edits.push_back(std::move(entry));
                }
                audit["edits"] = std::move(edits);
                *audit_out << audit.dump() << '\n';
            }
            if (instance.verification && instance.verification->passed && accepted.load() < n) {
                out << instance_to_json(instance).dump() << '\n';
                out.flush();
                accepted.fetch_add(1);
                ++stats.passed_verification;
                stats.assistant_turn_histogram[count_assistant_turns(instance)] += 1;
                if (config_.enrich_examples) {
                    std::lock_guard examples_lock(examples_mutex_);
                    for (const auto& subtask : instance.task_plan.subtasks) {
                        examples_.task_examples.push_back(subtask.description);
                    }
                }
            }
        }
    };

    if (config_.workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < config_.workers; ++i) {
            threads.emplace_back(worker);
        }
        for (auto& thread : threads) {
            thread.join();
        }
    }

    stats.total_api_calls = backend_->ledger().total_attempted();
    for (const auto& [tag, counter] : backend_->ledger().per_tag()) {
        stats.per_stage_calls[tag] = counter.attempted;
    }
    stats.pass_rate = stats.attempted > 0
                          ? static_cast<double>(stats.passed_verification) / stats.attempted
                          : 0.0;
    std::uint64_t turn_sum = 0;
    int turn_count = 0;
    for (const auto& [turns, frequency] : stats.assistant_turn_histogram) {
        turn_sum += static_cast<std::uint64_t>(turns) * frequency;
        turn_count += frequency;
    }
    stats.mean_assistant_turns = turn_count > 0 ? static_cast<double>(turn_sum) / turn_count : 0.0;

    write_stats(stats, out_path);
    std::cout << "requested " << stats.requested << ", attempted " << stats.attempted
              << ", passed " << stats.passed_verification << " (pass rate " << stats.pass_rate
              << "), api calls " << stats.total_api_calls << "\n";
    return stats;
}

}  // namespace dialoggen
