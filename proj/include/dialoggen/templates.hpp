#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dialoggen {

struct TemplateError : std::runtime_error {
    explicit TemplateError(const std::string& what) : std::runtime_error(what) {}
};

/// One stage prompt with {name} placeholders. Placeholder tokens are
/// identifiers in braces; literal braces (JSON snippets in the output-format
/// blocks) are left untouched because they never wrap a bare identifier.
struct PromptTemplate {
    std::string name;
    std::string body;
    std::vector<std::string> placeholders;  // required bindings, each present exactly once

    std::string render(const std::map<std::string, std::string>& bindings) const;
};

/// Placeholder token used for the i-th masked turn: xxx, yyy, zzz, then www
/// downward through the alphabet (26 available).
std::string mask_placeholder(std::size_t index);

/// The full template set for the pipeline, loaded from a directory of
/// <stage>.txt files. Validates that each stage's required placeholders
/// appear exactly once.
class TemplateSet {
public:
    /// `extra_panel_stages` names additional panel question templates to load
    /// beyond the manifest (same {candidate_tools}/{conversation} contract).
    static TemplateSet load_from_dir(const std::string& dir,
                                     const std::vector<std::string>& extra_panel_stages = {});

    const PromptTemplate& get(std::string_view stage) const;

    static const std::vector<std::pair<std::string, std::vector<std::string>>>& stage_manifest();

private:
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

}  // namespace dialoggen
