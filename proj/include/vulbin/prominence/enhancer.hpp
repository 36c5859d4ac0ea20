#pragma once

#include "vulbin/decomp/adapter.hpp"
#include "vulbin/llm/client.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vulbin::prominence {

enum class Action { RenameVariables, RecoverStructs, AnnotateVulnerabilities };

std::string_view to_string(Action action);
std::optional<Action> parse_action(std::string_view word);  // "rename", "structs", "annotate"

struct OptimizationPlan {
    std::vector<Action> actions;  // duplicate-free, canonical order
    std::string rationale;

    bool contains(Action a) const;
    // Deduplicates and sorts into Rename -> Structs -> Annotate.
    void canonicalize();
    static OptimizationPlan full(std::string rationale);
};

struct VulnComment {
    int line_no = 0;  // 1-based line of the raw code
    std::string text;
    std::optional<std::string> cwe_hint;
};

using RenameMap = std::map<std::string, std::string>;

struct EnhancedFunction {
    std::string function_id;
    std::string code;
    RenameMap rename_map;
    std::vector<std::string> struct_defs;
    std::vector<VulnComment> vuln_comments;
    OptimizationPlan provenance;
    bool rejected = false;  // composed rewrite failed validation; code is the raw text
    std::vector<std::string> warnings;
};

// Extra text appended to the annotation prompt, e.g. weakness names from the knowledge base.
struct AgentOptions {
    std::string annotation_hints;
};

OptimizationPlan decide_optimizations(const decomp::RawFunction& raw, llm::LlmHandle llm,
                                      std::vector<std::string>* warnings = nullptr);

// Invalid proposals (non-identifiers, keywords, collisions, foreign FUN_ names,
// non-injective targets) are dropped and reported through `warnings`.
// Errors: LlmFailure.
RenameMap rename_variables(const decomp::RawFunction& raw, llm::LlmHandle llm,
                           std::vector<std::string>* warnings = nullptr);

// Errors: LlmFailure.
std::vector<std::string> recover_structs(const decomp::RawFunction& raw, llm::LlmHandle llm,
                                         std::vector<std::string>* warnings = nullptr);

// `code` defaults to raw.pseudo_code; line numbers always refer to raw lines.
// Errors: LlmFailure.
std::vector<VulnComment> annotate_vulnerabilities(const decomp::RawFunction& raw, llm::LlmHandle llm,
                                                  std::vector<std::string>* warnings = nullptr,
                                                  std::string_view code = {}, const AgentOptions& opts = {});

// Runs the plan's agents in canonical order. A failing agent contributes
// nothing; a composition that fails validation yields the raw code with
// rejected = true.
EnhancedFunction apply_plan(const decomp::RawFunction& raw, const OptimizationPlan& plan, llm::LlmHandle llm,
                            const AgentOptions& opts = {});

// decide_optimizations followed by apply_plan.
EnhancedFunction enhance(const decomp::RawFunction& raw, llm::LlmHandle llm, const AgentOptions& opts = {});

bool validate_preservation(const decomp::RawFunction& raw, const EnhancedFunction& enhanced);

// Builds the enhanced text from its parts and validates it.
// Errors: PreservationViolation.
EnhancedFunction compose(const decomp::RawFunction& raw, const OptimizationPlan& plan, RenameMap renames,
                         std::vector<std::string> struct_defs, std::vector<VulnComment> comments);

// Raw text with the pieces applied, no validation.
std::string render(std::string_view raw_code, const RenameMap& renames, const std::vector<std::string>& struct_defs,
                   const std::vector<VulnComment>& comments);

// Replaces identifier tokens only; every other byte is kept.
std::string apply_renames(std::string_view code, const RenameMap& renames);

// Filters proposals down to a valid map for `code`. `own_name` is the only
// FUN_-style name the map may rename.
RenameMap sanitize_renames(std::string_view code, const std::vector<std::pair<std::string, std::string>>& proposals,
                           std::string_view own_name, std::vector<std::string>* warnings = nullptr);

// "struct T { type name; ... };" with simple field declarators only.
bool valid_struct_definition(std::string_view def);

// Makes function renames consistent across one binary: each function's own
// placeholder name is renamed everywhere it is called. Entries are matched to
// `raws` by function_id; results are re-validated.
void unify_function_names(const std::vector<decomp::RawFunction>& raws, std::vector<EnhancedFunction>& enhanced);

// Writes <dir>/enhanced/<function_id>.c and <function_id>.meta.json.
void save_enhanced(const std::filesystem::path& output_dir, const EnhancedFunction& fn);

std::string meta_json(const EnhancedFunction& fn);

}  // namespace vulbin::prominence
