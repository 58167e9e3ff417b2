#include "dialoggen/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dialoggen/json_io.hpp"

namespace dialoggen {

namespace {

IntRange range_from_json(const ojson& value, const std::string& key) {
    if (!value.is_array() || value.size() != 2 || !value[0].is_number_integer() ||
        !value[1].is_number_integer()) {
        throw ConfigError(key + " must be a [min, max] integer pair");
    }
    return IntRange{value[0].get<int>(), value[1].get<int>()};
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    if (path.empty() || base_dir.empty()) {
        return path;
    }
    std::filesystem::path p(path);
    if (p.is_absolute()) {
        return path;
    }
    return (std::filesystem::path(base_dir) / p).string();
}

}  // namespace

GenerationConfig config_from_json_text(const std::string& text, const std::string& base_dir) {
    ojson doc;
    try {
        doc = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& err) {
        throw ConfigError(std::string("config parse error: ") + err.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("config must be a JSON object");
    }

    static const std::set<std::string> known = {
        "subtask_range",     "steps_range",        "tools_per_instance",
        "injection_count_range", "max_refinement_passes", "mask_count_range",
        "weight_decay_factor",   "llm_retry_limit",   "seed",
        "tool_pool_path",    "templates_dir",      "prompt_examples_path",
        "backend",           "instance_call_cap",  "run_call_cap",
        "workers",           "panel_enabled",      "panel_questions",
        "enrich_examples",
    };
    static const std::set<std::string> known_backend = {"kind", "endpoint", "model", "api_key_env",
                                                        "script_path"};
    for (const auto& [key, value] : doc.items()) {
        if (!known.count(key)) {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }

    GenerationConfig config;
    if (doc.contains("subtask_range")) config.subtask_range = range_from_json(doc["subtask_range"], "subtask_range");
    if (doc.contains("steps_range")) config.steps_range = range_from_json(doc["steps_range"], "steps_range");
    if (doc.contains("tools_per_instance"))
        config.tools_per_instance = range_from_json(doc["tools_per_instance"], "tools_per_instance");
    if (doc.contains("injection_count_range"))
        config.injection_count_range =
            range_from_json(doc["injection_count_range"], "injection_count_range");
    if (doc.contains("mask_count_range"))
        config.mask_count_range = range_from_json(doc["mask_count_range"], "mask_count_range");
    if (doc.contains("max_refinement_passes"))
        config.max_refinement_passes = doc["max_refinement_passes"].get<int>();
    if (doc.contains("weight_decay_factor"))
        config.weight_decay_factor = doc["weight_decay_factor"].get<double>();
    if (doc.contains("llm_retry_limit")) config.llm_retry_limit = doc["llm_retry_limit"].get<int>();
    if (doc.contains("seed")) config.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("tool_pool_path"))
        config.tool_pool_path = resolve(base_dir, doc["tool_pool_path"].get<std::string>());
    if (doc.contains("templates_dir"))
        config.templates_dir = resolve(base_dir, doc["templates_dir"].get<std::string>());
    if (doc.contains("prompt_examples_path"))
        config.prompt_examples_path =
            resolve(base_dir, doc["prompt_examples_path"].get<std::string>());
    if (doc.contains("instance_call_cap"))
        config.instance_call_cap = doc["instance_call_cap"].get<int>();
    if (doc.contains("run_call_cap")) config.run_call_cap = doc["run_call_cap"].get<std::uint64_t>();
    if (doc.contains("workers")) config.workers = doc["workers"].get<int>();
    if (doc.contains("panel_enabled")) config.panel_enabled = doc["panel_enabled"].get<bool>();
    if (doc.contains("panel_questions")) {
        const auto& questions = doc["panel_questions"];
        if (!questions.is_array()) {
            throw ConfigError("panel_questions must be an array");
        }
        for (const auto& entry : questions) {
            if (!entry.is_object() || !entry.contains("id") || !entry.contains("pass_answer")) {
                throw ConfigError("panel question entries need id and pass_answer");
            }
            const std::string pass_answer = entry.at("pass_answer").get<std::string>();
            if (pass_answer != "yes" && pass_answer != "no") {
                throw ConfigError("panel question pass_answer must be 'yes' or 'no'");
            }
            config.panel_questions.push_back(
                PanelQuestionConfig{entry.at("id").get<std::string>(), pass_answer == "yes"});
        }
    }
    if (doc.contains("enrich_examples"))
        config.enrich_examples = doc["enrich_examples"].get<bool>();

    if (doc.contains("backend")) {
        const auto& backend = doc["backend"];
        if (!backend.is_object()) {
            throw ConfigError("backend must be an object");
        }
        for (const auto& [key, value] : backend.items()) {
            if (!known_backend.count(key)) {
                throw ConfigError("unknown backend config key '" + key + "'");
            }
        }
        if (backend.contains("kind")) {
            const std::string kind = backend["kind"].get<std::string>();
            if (kind == "http") {
                config.backend.kind = BackendKind::Http;
            } else if (kind == "mock") {
                config.backend.kind = BackendKind::Mock;
            } else {
                throw ConfigError("backend.kind must be 'http' or 'mock'");
            }
        }
        if (backend.contains("endpoint")) config.backend.endpoint = backend["endpoint"].get<std::string>();
        if (backend.contains("model")) config.backend.model = backend["model"].get<std::string>();
        if (backend.contains("api_key_env"))
            config.backend.api_key_env = backend["api_key_env"].get<std::string>();
        if (backend.contains("script_path"))
            config.backend.script_path = resolve(base_dir, backend["script_path"].get<std::string>());
    }

    config.validate();
    return config;
}

GenerationConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return config_from_json_text(buffer.str(),
                                 std::filesystem::path(path).parent_path().string());
}

}  // namespace dialoggen
