#include "dialoggen/backend.hpp"

#include <cstdlib>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "dialoggen/fc_parser.hpp"
#include "dialoggen/json_io.hpp"
#include "dialoggen/templates.hpp"

namespace dialoggen {

// ---------------------------------------------------------------------------
// CallLedger
// ---------------------------------------------------------------------------

void CallLedger::record_attempt(const std::string& tag, const std::string& instance_id) {
    std::lock_guard lock(mutex_);
    ++by_tag_[tag].attempted;
    ++by_instance_[instance_id].attempted;
    ++total_.attempted;
}

void CallLedger::record_success(const std::string& tag, const std::string& instance_id) {
    std::lock_guard lock(mutex_);
    ++by_tag_[tag].successful;
    ++by_instance_[instance_id].successful;
    ++total_.successful;
}

std::uint64_t CallLedger::total_attempted() const {
    std::lock_guard lock(mutex_);
    return total_.attempted;
}

std::uint64_t CallLedger::total_successful() const {
    std::lock_guard lock(mutex_);
    return total_.successful;
}

std::uint64_t CallLedger::instance_attempted(const std::string& instance_id) const {
    std::lock_guard lock(mutex_);
    auto it = by_instance_.find(instance_id);
    return it == by_instance_.end() ? 0 : it->second.attempted;
}

std::map<std::string, CallLedger::Counter> CallLedger::per_tag() const {
    std::lock_guard lock(mutex_);
    return by_tag_;
}

std::map<std::string, CallLedger::Counter> CallLedger::per_instance() const {
    std::lock_guard lock(mutex_);
    return by_instance_;
}

// ---------------------------------------------------------------------------
// Backend
// ---------------------------------------------------------------------------

Backend::~Backend() = default;

void Backend::open_transcript(const std::string& path) {
    std::lock_guard lock(transcript_mutex_);
    transcript_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc);
    if (!*transcript_) {
        throw ConfigError("cannot open transcript file: " + path);
    }
}

void Backend::record_transcript(const ChatRequest& request, const std::string& response,
                                const std::string& error) {
    std::lock_guard lock(transcript_mutex_);
    if (!transcript_) {
        return;
    }
    ojson record;
    record["seq"] = transcript_seq_++;
    record["instance"] = request.instance_id;
    record["tag"] = request.tag;
    ojson messages = ojson::array();
    for (const auto& message : request.messages) {
        ojson m;
        m["role"] = message.role;
        m["content"] = message.content;
        messages.push_back(std::move(m));
    }
    record["request"] = std::move(messages);
    if (error.empty()) {
        record["response"] = response;
    } else {
        record["error"] = error;
    }
    *transcript_ << record.dump() << '\n';
    transcript_->flush();
}

BackendResponse Backend::complete(const ChatRequest& request) {
    if (request.messages.empty()) {
        throw std::invalid_argument("chat request needs at least one message");
    }
    if (instance_call_cap_ > 0 && !request.instance_id.empty() &&
        ledger_.instance_attempted(request.instance_id) >= instance_call_cap_) {
        throw BudgetExceeded(BudgetExceeded::Scope::Instance, instance_call_cap_);
    }
    if (run_call_cap_ > 0 && ledger_.total_attempted() >= run_call_cap_) {
        throw BudgetExceeded(BudgetExceeded::Scope::Run, run_call_cap_);
    }
    ledger_.record_attempt(request.tag, request.instance_id);
    const auto start = std::chrono::steady_clock::now();
    try {
        BackendResponse response = complete_impl(request);
        response.latency =
            std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
        ledger_.record_success(request.tag, request.instance_id);
        record_transcript(request, response.text, "");
        return response;
    } catch (const std::exception& err) {
        record_transcript(request, "", err.what());
        throw;
    }
}

// ---------------------------------------------------------------------------
// Response synthesis (mock auto mode)
// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a64(std::string_view text, std::uint64_t seed) {
    std::uint64_t hash = 0xCBF29CE484222325ULL ^ seed;
    for (char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001B3ULL;
    }
    return hash;
}

/// Six lowercase base-36 chars; short enough to never look like a hex ID.
std::string short_tag(std::uint64_t hash) {
    static constexpr char alphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string out(6, 'a');
    for (auto& c : out) {
        c = alphabet[hash % 36];
        hash /= 36;
    }
    return out;
}

std::string prompt_text(const ChatRequest& request) {
    std::string text;
    for (const auto& message : request.messages) {
        text += message.content;
        text.push_back('\n');
    }
    return text;
}

std::vector<ToolSpec> parse_tool_section(std::string_view prompt) {
    std::vector<ToolSpec> tools;
    std::string_view section = prompt_section(prompt, "### Available Tool Candidates");
    std::size_t pos = 0;
    while (pos < section.size()) {
        std::size_t eol = section.find('\n', pos);
        if (eol == std::string_view::npos) {
            eol = section.size();
        }
        std::string_view line = section.substr(pos, eol - pos);
        if (!line.empty() && line.front() == '{') {
            try {
                tools.push_back(tool_from_json(ojson::parse(line)));
            } catch (const std::exception&) {
                // tolerate stray lines
            }
        }
        pos = eol + 1;
    }
    return tools;
}

bool has_string_param(const ToolSpec& tool) {
    for (const auto& param : tool.parameters) {
        if (param.type == ParamType::String) {
            return true;
        }
    }
    return false;
}

ParamValue sample_param_value(const ParamSpec& param, const std::string& tag, int step) {
    switch (param.type) {
        case ParamType::String:
            return ParamValue(param.name + "-" + tag + "-s" + std::to_string(step));
        case ParamType::Integer:
            return ParamValue(static_cast<std::int64_t>(step + 1));
        case ParamType::Number:
            return ParamValue(static_cast<double>(step) + 0.5);
        case ParamType::Boolean:
            return ParamValue(true);
        case ParamType::Array:
            return ParamValue(ParamValue::Array{});
        case ParamType::Object:
            return ParamValue(ParamValue::Object{});
        case ParamType::Enum:
            return ParamValue(param.enum_values.front());
    }
    return ParamValue(nullptr);
}

/// Builds a schema-complete call; the step index and a per-request tag are
/// woven into string arguments so no two synthesized call turns collide.
FunctionCall build_call(const ToolSpec& tool, const std::string& tag, int step) {
    FunctionCall call;
    call.name = tool.name;
    bool has_string_arg = false;
    for (const auto& param : tool.parameters) {
        if (!param.required) {
            continue;
        }
        call.args.emplace_back(param.name, sample_param_value(param, tag, step));
        has_string_arg = has_string_arg || param.type == ParamType::String;
    }
    if (!has_string_arg) {
        for (const auto& param : tool.parameters) {
            if (!param.required && param.type == ParamType::String) {
                call.args.emplace_back(param.name, sample_param_value(param, tag, step));
                break;
            }
        }
    }
    return call;
}

const ToolSpec* pick_tool(const std::vector<ToolSpec>& tools, std::uint64_t hash, int offset) {
    if (tools.empty()) {
        return nullptr;
    }
    std::vector<const ToolSpec*> preferred;
    for (const auto& tool : tools) {
        if (has_string_param(tool)) {
            preferred.push_back(&tool);
        }
    }
    if (preferred.empty()) {
        return &tools[(hash + static_cast<std::uint64_t>(offset)) % tools.size()];
    }
    return preferred[(hash + static_cast<std::uint64_t>(offset)) % preferred.size()];
}

std::string synth_task_init(std::string_view prompt, std::uint64_t hash) {
    const std::vector<ToolSpec> tools = parse_tool_section(prompt);
    const std::string steps = trim(prompt_section(prompt, "### Target Step Number"));
    const std::string tag = short_tag(hash);
    const ToolSpec* first = pick_tool(tools, hash, 0);
    const ToolSpec* second = pick_tool(tools, hash, 1);
    std::string description = "Handle request " + tag + ": start by using " +
                              (first ? first->name : "the available tools") + " to gather what is needed";
    if (second && first && second->name != first->name) {
        description += ", then finish the job with " + second->name;
    }
    description += ", completing the work in " + (steps.empty() ? "the planned" : steps) +
                   " sequential tool-calling steps and closing with a short summary.";
    return "<Task_Start>" + description + "<Task_End>";
}

std::string synth_traj_init(std::string_view prompt, std::uint64_t hash) {
    const std::vector<ToolSpec> tools = parse_tool_section(prompt);
    const std::string tag = short_tag(hash);
    int steps = 1;
    static const std::regex step_marker("Planned tool-calling steps: ([0-9]+)");
    std::cmatch match;
    const std::string_view task = prompt_section(prompt, "### Current Task");
    if (std::regex_search(task.data(), task.data() + task.size(), match, step_marker)) {
        steps = std::stoi(match[1].str());
    }

    std::vector<Turn> turns;
    turns.push_back(Turn{Role::User,
                         "So, next on my plate (ref " + tag +
                             "): please take care of the following for me. " +
                             trim(task.substr(0, task.find("\nPlanned tool-calling steps"))) +
                             " I have included every detail you should need."});
    for (int s = 0; s < steps; ++s) {
        const ToolSpec* tool = pick_tool(tools, hash, s);
        if (tool == nullptr) {
            turns.push_back(Turn{Role::Assistant, "[noop()]"});
        } else {
            turns.push_back(Turn{Role::Assistant, fc::serialize_calls({build_call(*tool, tag, s)})});
        }
        ojson result;
        result["status"] = "ok";
        result["detail"] = std::string(tool ? tool->name : "tool") + " finished step " +
                           std::to_string(s + 1) + " (run " + tag + ")";
        ojson wrapper = ojson::array({result});
        turns.push_back(Turn{Role::Tool, wrapper.dump()});
    }
    turns.push_back(Turn{Role::Assistant,
                         "All steps for this request are done (run " + tag +
                             "). Everything completed cleanly; let me know what you would like next."});
    return render_turns(turns);
}

std::string extract_target_content(std::string_view prompt, std::string_view header) {
    const std::string_view section = prompt_section(prompt, header);
    const std::string_view block = balanced_json_block(section);
    if (!block.empty()) {
        try {
            const ojson turn = ojson::parse(block);
            if (turn.is_object() && turn.contains("content")) {
                return turn.at("content").get<std::string>();
            }
        } catch (const std::exception&) {
        }
    }
    return trim(section);
}

std::string dump_turns3(const Turn& a, const Turn& b, const Turn& c) {
    const Turn turns[] = {a, b, c};
    return render_turns(turns);
}

std::string synth_clarification(std::string_view prompt, std::uint64_t hash) {
    const std::string tag = short_tag(hash);
    const std::string original = extract_target_content(prompt, "### Target User Turn");
    return dump_turns3(
        Turn{Role::User, "Actually, there is something else I need taken care of, though I don't "
                         "have all the specifics written down right now (ref " + tag + ")."},
        Turn{Role::Assistant, "Happy to help. Could you share the missing details, so I can pick the "
                              "right tool and fill in its parameters? (ref " + tag + ")"},
        Turn{Role::User, "Right, sorry. Here is everything: " + original});
}

std::string synth_tool_awareness(std::string_view prompt, std::uint64_t hash) {
    const std::string tag = short_tag(hash);
    const std::string original = extract_target_content(prompt, "### Target User Turn");
    const std::string_view removed_section = prompt_section(prompt, "### The Tool to be Removed");
    const std::string removed = std::string(balanced_json_block(removed_section));
    return dump_turns3(
        Turn{Role::User, original},
        Turn{Role::Assistant, "I checked the tools currently available to me, and none of them can "
                              "handle this part of your request (ref " + tag + ")."},
        Turn{Role::User, "No problem, you can use this one going forward: " +
                             (removed.empty() ? std::string("the tool I mentioned") : removed)});
}

std::string synth_error_simulation(std::string_view prompt, std::uint64_t hash) {
    const std::string tag = short_tag(hash);
    const std::string original = extract_target_content(prompt, "### Target Assistant Turn");
    const std::vector<ToolSpec> tools = parse_tool_section(prompt);

    std::string bad_call = original;
    std::string bad_param = "input";
    try {
        std::vector<FunctionCall> calls = fc::parse_calls(original);
        bool perturbed = false;
        for (auto& call : calls) {
            const ToolSpec* spec = nullptr;
            for (const auto& tool : tools) {
                if (tool.name == call.name) {
                    spec = &tool;
                }
            }
            for (auto& [name, value] : call.args) {
                const ParamSpec* param = spec ? spec->find_param(name) : nullptr;
                if (param && param->type == ParamType::Enum) {
                    continue;
                }
                if (value.is_string()) {
                    value = ParamValue(value.as_string() + "-oops");
                } else if (value.is_integer()) {
                    value = ParamValue(value.as_integer() + 999);
                } else if (value.is_bool()) {
                    value = ParamValue(!value.as_bool());
                } else {
                    continue;
                }
                bad_param = name;
                perturbed = true;
                break;
            }
            if (perturbed) {
                break;
            }
        }
        bad_call = fc::serialize_calls(calls);
    } catch (const std::exception&) {
        // leave the original call text in place
    }

    ojson error_obj;
    error_obj["error"] = "invalid value for parameter '" + bad_param + "'";
    error_obj["hint"] = "check the expected format and retry (ref " + tag + ")";
    return dump_turns3(Turn{Role::Assistant, bad_call},
                       Turn{Role::Tool, ojson::array({error_obj}).dump()},
                       Turn{Role::Assistant, original});
}

std::string synth_non_function_calling(std::string_view prompt, std::uint64_t hash) {
    const std::string tag = short_tag(hash);
    const std::string original = extract_target_content(prompt, "### Target User Turn");
    return dump_turns3(
        Turn{Role::User, "Before we carry on, quick side question (ref " + tag + "): any general "
                         "advice for keeping this kind of task organized?"},
        Turn{Role::Assistant, "Sure! A short checklist works well: note what you need up front, run "
                              "one step at a time, and confirm each result before moving on (ref " +
                                  tag + ")."},
        Turn{Role::User, original});
}

std::string synth_mask_fill(std::string_view prompt, std::uint64_t hash) {
    const std::string tag = short_tag(hash);
    const std::vector<ToolSpec> tools = parse_tool_section(prompt);
    const std::string_view convo_text = balanced_json_block(prompt_section(prompt, "### Given Conversation"));

    std::vector<Turn> turns;
    try {
        const ojson convo = ojson::parse(convo_text);
        for (const auto& item : convo) {
            turns.push_back(turn_from_json(item));
        }
    } catch (const std::exception&) {
        return "{}";
    }

    std::set<std::string> placeholder_set;
    for (std::size_t i = 0; i < 26; ++i) {
        placeholder_set.insert(mask_placeholder(i));
    }

    ojson fills = ojson::object();
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const std::string& content = turns[i].content;
        if (!placeholder_set.count(content)) {
            continue;
        }
        const bool next_is_tool = i + 1 < turns.size() && turns[i + 1].role == Role::Tool;
        std::string fill;
        switch (turns[i].role) {
            case Role::User:
                fill = "One more related thing, please, same details as before apply (fill " + tag +
                       "-" + content + ").";
                break;
            case Role::Tool: {
                ojson result;
                result["status"] = "ok";
                result["note"] = "refreshed output (fill " + tag + "-" + content + ")";
                fill = ojson::array({result}).dump();
                break;
            }
            case Role::Assistant: {
                if (next_is_tool) {
                    // Usable tools at this position: anything already called
                    // earlier, plus every candidate that is not introduced
                    // mid-conversation (a user turn embedding the tool's JSON
                    // marks an introduction). Prefer tools whose call can
                    // carry a distinguishing string argument so refills do
                    // not collide byte-for-byte.
                    std::vector<const ToolSpec*> safe;
                    auto add_safe = [&](const std::string& name) {
                        for (const auto& t : tools) {
                            if (t.name != name) {
                                continue;
                            }
                            for (const ToolSpec* seen : safe) {
                                if (seen == &t) {
                                    return;
                                }
                            }
                            safe.push_back(&t);
                        }
                    };
                    for (std::size_t j = 0; j < i; ++j) {
                        if (turns[j].role != Role::Assistant) {
                            continue;
                        }
                        try {
                            for (const auto& call : fc::parse_calls(turns[j].content)) {
                                add_safe(call.name);
                            }
                        } catch (const std::exception&) {
                        }
                    }
                    for (const auto& t : tools) {
                        bool introduced = false;
                        const std::string marker = "\"name\":\"" + t.name + "\"";
                        for (const auto& turn : turns) {
                            introduced = introduced || (turn.role == Role::User &&
                                                        turn.content.find(marker) !=
                                                            std::string::npos);
                        }
                        if (!introduced) {
                            add_safe(t.name);
                        }
                    }
                    std::vector<const ToolSpec*> stringy;
                    for (const ToolSpec* t : safe) {
                        if (has_string_param(*t)) {
                            stringy.push_back(t);
                        }
                    }
                    const ToolSpec* tool = nullptr;
                    if (!stringy.empty()) {
                        tool = stringy[(hash + i) % stringy.size()];
                    } else if (!safe.empty()) {
                        tool = safe.back();
                    }
                    if (tool) {
                        FunctionCall call = build_call(*tool, tag + "-" + content, static_cast<int>(i));
                        fill = fc::serialize_calls({call});
                    } else {
                        fill = "[noop()]";
                    }
                } else {
                    fill = "That part is wrapped up as well (fill " + tag + "-" + content +
                           "). Everything looks consistent so far.";
                }
                break;
            }
            case Role::System:
                fill = "system";
                break;
        }
        fills[content] = fill;
    }
    return fills.dump();
}

}  // namespace

std::string synthesize_response(const ChatRequest& request, std::uint64_t seed) {
    const std::string prompt = prompt_text(request);
    const std::uint64_t hash = fnv1a64(prompt, seed);
    const std::string& tag = request.tag;

    if (tag == "task_init") return synth_task_init(prompt, hash);
    if (tag == "traj_init") return synth_traj_init(prompt, hash);
    if (tag == "inject_clarification") return synth_clarification(prompt, hash);
    if (tag == "inject_tool_awareness") return synth_tool_awareness(prompt, hash);
    if (tag == "inject_error_simulation") return synth_error_simulation(prompt, hash);
    if (tag == "inject_non_function_calling") return synth_non_function_calling(prompt, hash);
    if (tag == "mask_fill") return synth_mask_fill(prompt, hash);
    if (tag == "judge") {
        return R"({"think": "Both continuations stay on topic; the refreshed one reads at least as well.", "judgement": "A"})";
    }
    if (tag == "panel_hallucination") {
        return R"({"answer": "no", "rationale": "Every asserted fact traces back to the tools, the user, or a tool output."})";
    }
    if (tag.rfind("panel_", 0) == 0) {
        return R"({"answer": "yes", "rationale": "The conversation holds together and the outputs follow from their calls."})";
    }
    throw ScriptExhausted(tag);
}

// ---------------------------------------------------------------------------
// MockBackend
// ---------------------------------------------------------------------------

MockScript MockScript::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open mock script: " + path);
    }
    ojson doc;
    try {
        doc = ojson::parse(in);
    } catch (const nlohmann::json::parse_error& err) {
        throw ConfigError("mock script " + path + ": " + err.what());
    }
    MockScript script;
    script.synthesize_unscripted = doc.value("auto", false);
    if (doc.contains("default")) {
        script.default_responses = doc.at("default").get<std::vector<std::string>>();
    }
    if (doc.contains("by_tag")) {
        for (const auto& [tag, list] : doc.at("by_tag").items()) {
            script.by_tag[tag] = list.get<std::vector<std::string>>();
        }
    }
    if (doc.contains("by_instance")) {
        for (const auto& [instance, tags] : doc.at("by_instance").items()) {
            for (const auto& [tag, list] : tags.items()) {
                script.by_instance[instance][tag] = list.get<std::vector<std::string>>();
            }
        }
    }
    return script;
}

MockBackend::MockBackend(MockScript script, std::uint64_t seed)
    : script_(std::move(script)), seed_(seed) {}

std::unique_ptr<MockBackend> MockBackend::synthetic(std::uint64_t seed) {
    MockScript script;
    script.synthesize_unscripted = true;
    return std::make_unique<MockBackend>(std::move(script), seed);
}

std::optional<std::string> MockBackend::next_scripted(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    if (auto inst = script_.by_instance.find(request.instance_id); inst != script_.by_instance.end()) {
        if (auto it = inst->second.find(request.tag); it != inst->second.end()) {
            auto& cursor = instance_cursor_[request.instance_id][request.tag];
            if (cursor < it->second.size()) {
                return it->second[cursor++];
            }
        }
    }
    if (auto it = script_.by_tag.find(request.tag); it != script_.by_tag.end()) {
        auto& cursor = tag_cursor_[request.tag];
        if (cursor < it->second.size()) {
            return it->second[cursor++];
        }
    }
    if (default_cursor_ < script_.default_responses.size()) {
        return script_.default_responses[default_cursor_++];
    }
    return std::nullopt;
}

BackendResponse MockBackend::complete_impl(const ChatRequest& request) {
    if (auto scripted = next_scripted(request)) {
        return BackendResponse{*scripted, std::nullopt, {}};
    }
    if (!script_.synthesize_unscripted) {
        throw ScriptExhausted(request.tag);
    }
    return BackendResponse{synthesize_response(request, seed_), std::nullopt, {}};
}

// ---------------------------------------------------------------------------
// HttpBackend
// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(std::string endpoint, std::string model, std::string api_key_env)
    : endpoint_(std::move(endpoint)), model_(std::move(model)) {
    if (const char* key = std::getenv(api_key_env.c_str())) {
        api_key_ = key;
    }
}

BackendResponse HttpBackend::complete_impl(const ChatRequest& request) {
    // Implemented in http_backend.cpp to keep httplib out of this TU.
    return perform_chat_completion(endpoint_, model_, api_key_, request);
}

std::unique_ptr<Backend> make_backend(const GenerationConfig& config) {
    std::unique_ptr<Backend> backend;
    if (config.backend.kind == BackendKind::Mock) {
        MockScript script;
        if (!config.backend.script_path.empty()) {
            script = MockScript::from_file(config.backend.script_path);
        } else {
            script.synthesize_unscripted = true;
        }
        backend = std::make_unique<MockBackend>(std::move(script), config.seed);
    } else {
        if (config.backend.endpoint.empty()) {
            throw ConfigError("http backend requires backend.endpoint");
        }
        backend = std::make_unique<HttpBackend>(config.backend.endpoint, config.backend.model,
                                                config.backend.api_key_env);
    }
    backend->set_instance_call_cap(static_cast<std::uint64_t>(config.instance_call_cap));
    backend->set_run_call_cap(config.run_call_cap);
    return backend;
}

}  // namespace dialoggen
