#include "vulbin/common/text.hpp"
#include "vulbin/lang/lexer.hpp"
#include "vulbin/llm/protocol.hpp"
#include "vulbin/prominence/enhancer.hpp"

#include <algorithm>
#include <regex>

namespace vulbin::prominence {

namespace p = llm::protocol;
using decomp::RawFunction;
using llm::ChatMessage;
using llm::Role;

namespace {

void warn(std::vector<std::string>* sink, std::string msg) {
    if (sink) sink->push_back(std::move(msg));
}

std::string code_request(std::string_view ask, std::string_view code, std::string_view extra = {}) {
    std::string out(ask);
    out += "\n";
    if (!extra.empty()) out += std::string(extra) + "\n";
    return out + p::fence(code, "c") + "\n";
}

// One request plus at most one repair turn. Any transport or budget problem
// and a second unparseable reply both surface as LlmFailure.
template <class Parse>
auto ask(llm::LlmHandle llm, std::string_view task, std::string_view instructions, std::string request, Parse parse)
    -> typename decltype(parse(std::string_view{}))::value_type {
    std::vector<ChatMessage> messages{
        {Role::system, p::task_line(task) + "\n" + std::string(instructions)},
        {Role::user, std::move(request)},
    };
    try {
        for (int turn = 0; turn < 2; ++turn) {
            std::string reply = llm.complete(messages);
            if (auto parsed = parse(reply)) return std::move(*parsed);
            if (turn == 0) {
                messages.push_back({Role::assistant, reply.empty() ? std::string("(empty)") : reply});
                messages.push_back({Role::user, std::string(p::kRepairPrompt)});
            }
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::LlmFailure) throw;
        throw Error(ErrorCode::LlmFailure, std::string(task) + ": " + e.what());
    }
    throw Error(ErrorCode::LlmFailure, std::string(task) + ": reply could not be parsed after repair");
}

bool empty_body(const std::vector<lang::Token>& t) {
    int paren = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i].punct("(")) ++paren;
        else if (t[i].punct(")")) --paren;
        else if (paren == 0 && t[i].punct("{")) {
            if (i + 2 == t.size()) return t[i + 1].punct("}");
            // a bare "return;" counts as empty too
            return i + 4 == t.size() && t[i + 1].text == "return" && t[i + 2].punct(";") && t[i + 3].punct("}");
        }
    }
    return false;
}

std::optional<OptimizationPlan> parse_plan(std::string_view reply, std::vector<std::string>* warnings) {
    auto block = p::last_fenced_block(reply);
    if (!block) return std::nullopt;
    std::optional<OptimizationPlan> plan;
    std::string rationale;
    for (auto line : text::split_lines(*block)) {
        line = text::trim(line);
        if (text::starts_with_ci(line, "ACTIONS:")) {
            plan.emplace();
            std::string words(line.substr(8));
            std::replace(words.begin(), words.end(), ',', ' ');
            for (auto& w : text::split(words, ' ')) {
                auto word = text::trim(w);
                if (word.empty()) continue;
                if (auto a = parse_action(word)) plan->actions.push_back(*a);
                else warn(warnings, "plan: unknown action '" + std::string(word) + "' ignored");
            }
        } else if (text::starts_with_ci(line, "RATIONALE:")) {
            rationale = std::string(text::trim(line.substr(10)));
        }
    }
    if (plan) {
        plan->rationale = rationale;
        plan->canonicalize();
    }
    return plan;
}

const std::regex kRenameLine(R"(^\s*([^\s]+)\s*->\s*([^\s]+)\s*$)");
const std::regex kCommentLine(R"(^\s*([0-9]+)\s*\|\s*([^|]*?)\s*\|\s*(.*?)\s*$)");
const std::regex kCweId(R"(^CWE-[0-9]+$)");

}  // namespace

OptimizationPlan decide_optimizations(const RawFunction& raw, llm::LlmHandle llm, std::vector<std::string>* warnings) {
    auto tokens = lang::code_tokens(raw.pseudo_code, lang::LexMode::Lenient);
    if (tokens.empty() || empty_body(tokens)) return {{}, "empty function body"};
    if (!lang::balanced(tokens)) {
        return {{Action::AnnotateVulnerabilities}, "unbalanced braces: annotation only"};
    }
    try {
        return ask(llm, p::kTaskPlan,
                   "Inspect the grammar, functionality and data structures of decompiled C pseudo-code and choose "
                   "which rewrites would make weaknesses easier to see. Available actions: rename, structs, annotate. "
                   "Reply with a fenced block containing 'ACTIONS: <comma separated list>' and 'RATIONALE: <text>'.",
                   code_request("Choose the rewrites for this function.", raw.pseudo_code),
                   [&](std::string_view r) { return parse_plan(r, warnings); });
    } catch (const Error& e) {
        if (e.code() != ErrorCode::LlmFailure) throw;
        warn(warnings, std::string("plan: ") + e.what());
        return OptimizationPlan::full("fallback");
    }
}

RenameMap rename_variables(const RawFunction& raw, llm::LlmHandle llm, std::vector<std::string>* warnings) {
    auto proposals = ask(
        llm, p::kTaskRename,
        "Give decompiler placeholder identifiers (variables, parameters and the function itself) descriptive names. "
        "Reply with a fenced block of 'old -> new' lines, one per identifier.",
        code_request("Rename the placeholder identifiers in this function.", raw.pseudo_code),
        [&](std::string_view r) -> std::optional<std::vector<std::pair<std::string, std::string>>> {
            auto block = p::last_fenced_block(r);
            if (!block) return std::nullopt;
            std::vector<std::pair<std::string, std::string>> out;
            for (auto line : text::split_lines(*block)) {
                if (text::trim(line).empty()) continue;
                std::string s(line);
                std::smatch m;
                if (std::regex_match(s, m, kRenameLine)) out.emplace_back(m[1].str(), m[2].str());
                else warn(warnings, "rename: malformed line '" + s + "' ignored");
            }
            return out;
        });
    return sanitize_renames(raw.pseudo_code, proposals, raw.synthetic_name, warnings);
}

std::vector<std::string> recover_structs(const RawFunction& raw, llm::LlmHandle llm,
                                         std::vector<std::string>* warnings) {
    auto block = ask(llm, p::kTaskStructs,
                     "Recover aggregate types from pointer accesses at constant offsets. Reply with a fenced c block "
                     "of struct definitions whose fields are named after their offsets; reply with an empty block "
                     "when there are none.",
                     code_request("Recover the structures used by this function.", raw.pseudo_code),
                     [](std::string_view r) { return p::last_fenced_block(r); });
    // Split at top-level "};".
    std::vector<std::string> defs;
    std::string current;
    int depth = 0;
    for (char c : block) {
        current.push_back(c);
        if (c == '{') ++depth;
        if (c == '}') --depth;
        if (c == ';' && depth == 0) {
            auto def = std::string(text::trim(current));
            current.clear();
            if (def.empty()) continue;
            if (valid_struct_definition(def)) defs.push_back(def);
            else warn(warnings, "structs: invalid definition dropped: " + def);
        }
    }
    if (!text::trim(current).empty()) {
        warn(warnings, "structs: trailing text dropped: " + std::string(text::trim(current)));
    }
    return defs;
}

std::vector<VulnComment> annotate_vulnerabilities(const RawFunction& raw, llm::LlmHandle llm,
                                                  std::vector<std::string>* warnings, std::string_view code,
                                                  const AgentOptions& opts) {
    if (code.empty()) code = raw.pseudo_code;
    const auto line_count = static_cast<int>(text::split_lines(raw.pseudo_code).size());
    return ask(
        llm, p::kTaskAnnotate,
        "Explain what the function does and point out lines with potential weaknesses such as unchecked copies, "
        "pointer arithmetic and unvalidated input. Reply with a fenced block of 'line | CWE-id or - | text' lines; "
        "line numbers count from 1.",
        code_request("Annotate this function.", code, opts.annotation_hints),
        [&](std::string_view r) -> std::optional<std::vector<VulnComment>> {
            auto block = p::last_fenced_block(r);
            if (!block) return std::nullopt;
            std::vector<VulnComment> out;
            for (auto line : text::split_lines(*block)) {
                if (text::trim(line).empty()) continue;
                std::string s(line);
                std::smatch m;
                if (!std::regex_match(s, m, kCommentLine)) {
                    warn(warnings, "annotate: malformed line '" + s + "' ignored");
                    continue;
                }
                int n = 0;
                try {
                    n = std::stoi(m[1].str());
                } catch (...) {
                    n = 0;
                }
                if (n < 1 || n > line_count) {
                    warn(warnings, "annotate: line " + m[1].str() + " out of range");
                    continue;
                }
                VulnComment c{n, m[3].str(), std::nullopt};
                std::string hint = m[2].str();
                if (std::regex_match(hint, kCweId)) c.cwe_hint = hint;
                else if (!hint.empty() && hint != "-") warn(warnings, "annotate: bad CWE hint '" + hint + "' ignored");
                if (!c.text.empty()) out.push_back(std::move(c));
            }
            return out;
        });
}

EnhancedFunction apply_plan(const RawFunction& raw, const OptimizationPlan& plan_in, llm::LlmHandle llm,
                            const AgentOptions& opts) {
    OptimizationPlan plan = plan_in;
    plan.canonicalize();
    std::vector<std::string> warnings;
    RenameMap renames;
    std::vector<std::string> structs;
    std::vector<VulnComment> comments;
    auto attempt = [&](std::string_view what, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::LlmFailure) throw;
            warnings.push_back(std::string(what) + ": " + e.what());
        }
    };
    if (plan.contains(Action::RenameVariables)) {
        attempt("rename", [&] { renames = rename_variables(raw, llm, &warnings); });
    }
    if (plan.contains(Action::RecoverStructs)) {
        attempt("structs", [&] { structs = recover_structs(raw, llm, &warnings); });
    }
    if (plan.contains(Action::AnnotateVulnerabilities)) {
        std::string renamed = apply_renames(raw.pseudo_code, renames);
        attempt("annotate", [&] { comments = annotate_vulnerabilities(raw, llm, &warnings, renamed, opts); });
    }
    EnhancedFunction out;
    try {
        out = compose(raw, plan, std::move(renames), std::move(structs), std::move(comments));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::PreservationViolation) throw;
        out.function_id = raw.function_id;
        out.code = raw.pseudo_code;
        out.provenance = plan;
        out.rejected = true;
        warnings.push_back(e.what());
    }
    out.warnings.insert(out.warnings.begin(), warnings.begin(), warnings.end());
    return out;
}

EnhancedFunction enhance(const RawFunction& raw, llm::LlmHandle llm, const AgentOptions& opts) {
    std::vector<std::string> warnings;
    auto plan = decide_optimizations(raw, llm, &warnings);
    auto out = apply_plan(raw, plan, llm, opts);
    out.warnings.insert(out.warnings.begin(), warnings.begin(), warnings.end());
    return out;
}

}  // namespace vulbin::prominence
