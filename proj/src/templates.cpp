#include "dialoggen/templates.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace dialoggen {

namespace {

bool is_placeholder_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

/// Finds {identifier} tokens. A '{' followed by anything other than an
/// identifier-then-'}' is literal text.
std::vector<std::string> scan_placeholders(const std::string& body) {
    std::vector<std::string> found;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '{') {
            continue;
        }
        std::size_t j = i + 1;
        while (j < body.size() && is_placeholder_char(body[j])) {
            ++j;
        }
        if (j > i + 1 && j < body.size() && body[j] == '}' &&
            !std::isdigit(static_cast<unsigned char>(body[i + 1]))) {
            found.push_back(body.substr(i + 1, j - i - 1));
            i = j;
        }
    }
    return found;
}

}  // namespace

std::string mask_placeholder(std::size_t index) {
    static constexpr char letters[] = "xyzwvutsrqponmlkjihgfedcba";
    if (index >= sizeof(letters) - 1) {
        throw TemplateError("mask placeholder index out of range");
    }
    return std::string(3, letters[index]);
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
    std::string out;
    out.reserve(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] == '{') {
            std::size_t j = i + 1;
            while (j < body.size() && is_placeholder_char(body[j])) {
                ++j;
            }
            if (j > i + 1 && j < body.size() && body[j] == '}' &&
                !std::isdigit(static_cast<unsigned char>(body[i + 1]))) {
                const std::string key = body.substr(i + 1, j - i - 1);
                auto it = bindings.find(key);
                if (it == bindings.end()) {
                    throw TemplateError("template '" + name + "': unbound placeholder {" + key + "}");
                }
                out += it->second;
                i = j;
                continue;
            }
        }
        out.push_back(body[i]);
    }
    return out;
}

const std::vector<std::pair<std::string, std::vector<std::string>>>& TemplateSet::stage_manifest() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> manifest = {
        {"system_prompt", {"candidate_tools"}},
        {"task_init", {"examples", "candidate_tools", "completed_task", "step_number"}},
        {"traj_init", {"example", "candidate_tools", "current_task", "history_trajectory"}},
        {"inject_clarification", {"example", "candidate_tools", "conversation", "user_turn"}},
        {"inject_tool_awareness",
         {"example", "candidate_tools", "conversation", "user_turn", "removed_tool"}},
        {"inject_error_simulation", {"example", "candidate_tools", "conversation", "assistant_turn"}},
        {"inject_non_function_calling", {"example", "candidate_tools", "conversation", "user_turn"}},
        {"mask_and_fill", {"candidate_tools", "conversation"}},
        {"judge", {"candidate_tools", "conversation", "trajectory_a", "trajectory_b"}},
        {"panel_coherence", {"candidate_tools", "conversation"}},
        {"panel_tool_output", {"candidate_tools", "conversation"}},
        {"panel_resolution", {"candidate_tools", "conversation"}},
        {"panel_hallucination", {"candidate_tools", "conversation"}},
    };
    return manifest;
}

TemplateSet TemplateSet::load_from_dir(const std::string& dir,
                                       const std::vector<std::string>& extra_panel_stages) {
    auto manifest = stage_manifest();
    for (const auto& stage : extra_panel_stages) {
        bool known = false;
        for (const auto& [name, required] : manifest) {
            known = known || name == stage;
        }
        if (!known) {
            manifest.emplace_back(stage,
                                  std::vector<std::string>{"candidate_tools", "conversation"});
        }
    }

    TemplateSet set;
    for (const auto& [stage, required] : manifest) {
        const std::string path = dir + "/" + stage + ".txt";
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw TemplateError("missing template file: " + path);
        }
        std::ostringstream buffer;
        buffer << in.rdbuf();

        PromptTemplate tmpl;
        tmpl.name = stage;
        tmpl.body = buffer.str();
        tmpl.placeholders = required;

        const auto found = scan_placeholders(tmpl.body);
        for (const auto& name : required) {
            std::size_t count = 0;
            for (const auto& f : found) {
                if (f == name) {
                    ++count;
                }
            }
            if (count != 1) {
                throw TemplateError("template '" + stage + "': placeholder {" + name +
                                    "} must appear exactly once, found " + std::to_string(count));
            }
        }
        for (const auto& f : found) {
            bool known = false;
            for (const auto& name : required) {
                known = known || name == f;
            }
            if (!known) {
                throw TemplateError("template '" + stage + "': unknown placeholder {" + f + "}");
            }
        }
        set.templates_.emplace(stage, std::move(tmpl));
    }
    return set;
}

const PromptTemplate& TemplateSet::get(std::string_view stage) const {
    auto it = templates_.find(stage);
    if (it == templates_.end()) {
        throw TemplateError("unknown template stage: " + std::string(stage));
    }
    return it->second;
}

}  // namespace dialoggen
