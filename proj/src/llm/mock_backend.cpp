#include "vulbin/llm/mock_backend.hpp"

#include "vulbin/common/text.hpp"
#include "vulbin/lang/lexer.hpp"
#include "vulbin/llm/protocol.hpp"

#include <algorithm>
#include <set>

namespace vulbin::llm {

namespace {

namespace p = protocol;
using namespace mock_rules;

std::string line_value(std::string_view content, std::string_view prefix) {
    for (auto line : text::split_lines(content)) {
        if (line.starts_with(prefix)) return std::string(text::trim(line.substr(prefix.size())));
    }
    return {};
}

std::vector<std::string> list_value(std::string_view content, std::string_view prefix) {
    std::vector<std::string> out;
    for (auto& item : text::split(line_value(content, prefix), ',')) {
        auto t = text::trim(item);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

std::string join_names(const std::vector<std::string>& names) {
    return names.empty() ? std::string("no other functions") : text::join(names, ", ");
}

std::string classify(std::string_view code, std::string_view request) {
    auto cwes = list_value(request, p::kCweListPrefix);
    auto findings = find_weaknesses(code);
    auto callees = called_functions(code);
    std::string body;
    for (const auto& cwe : cwes) {
        auto hit = std::find_if(findings.begin(), findings.end(), [&](const Finding& f) { return f.cwe_id == cwe; });
        if (!body.empty()) body += "\n";
        body += cwe + ":\n";
        if (hit != findings.end()) {
            body += "ANSWER: yes\n";
            body += "REASON: Functionality: the code calls " + join_names(callees) + ". Root cause: line " +
                    std::to_string(hit->line) + ", " + hit->root_cause + ". Impact: " + hit->impact + ".\n";
        } else {
            body += "ANSWER: no\n";
            body += "REASON: Functionality: the code calls " + join_names(callees) + ". Root cause: no " +
                    cwe_short_name(cwe) + " pattern is present. Impact: none.\n";
        }
    }
    return p::fence(body);
}

bool has_aggregates(std::string_view code) { return !propose_structs(code).empty(); }

bool has_generic_names(std::string_view code) {
    for (const auto& tok : lang::code_tokens(code, lang::LexMode::Lenient)) {
        if (tok.kind == lang::TokenKind::Identifier && is_generic_name(tok.text)) return true;
    }
    return false;
}

std::string decide(std::string_view code) {
    std::vector<std::string> actions;
    std::vector<std::string> why;
    if (has_generic_names(code)) {
        actions.emplace_back("rename");
        why.emplace_back("placeholder identifiers present");
    }
    if (has_aggregates(code)) {
        actions.emplace_back("structs");
        why.emplace_back("pointer accessed at several constant offsets");
    }
    actions.emplace_back("annotate");
    why.emplace_back("annotation always applies");
    return p::fence("ACTIONS: " + text::join(actions, ", ") + "\nRATIONALE: " + text::join(why, "; ") + "\n");
}

std::string rename(std::string_view code) {
    std::string body;
    for (const auto& [from, to] : propose_renames(code)) body += from + " -> " + to + "\n";
    return p::fence(body);
}

std::string structs(std::string_view code) {
    std::string body;
    for (const auto& def : propose_structs(code)) body += def + "\n";
    return p::fence(body, "c");
}

std::string annotate(std::string_view code) {
    struct Note {
        int line;
        std::string cwe;
        std::string text;
    };
    std::vector<Note> notes;
    auto callees = called_functions(code);
    if (!callees.empty()) notes.push_back({1, "-", "functionality: calls " + text::join(callees, ", ")});
    for (const auto& f : find_weaknesses(code)) {
        notes.push_back({f.line, f.cwe_id, cwe_short_name(f.cwe_id) + ": " + f.root_cause});
    }
    std::set<int> flagged;
    for (const auto& n : notes) {
        if (n.cwe != "-") flagged.insert(n.line);
    }
    for (int line : pointer_arithmetic_lines(code)) {
        if (!flagged.contains(line)) {
            notes.push_back({line, "-", "pointer arithmetic with a run-time offset; unchecked bounds can overflow the buffer"});
        }
    }
    std::stable_sort(notes.begin(), notes.end(), [](const Note& a, const Note& b) { return a.line < b.line; });
    std::string body;
    for (const auto& n : notes) body += std::to_string(n.line) + " | " + n.cwe + " | " + n.text + "\n";
    return p::fence(body);
}

std::string summarize(std::string_view code, std::string_view request) {
    std::string name = line_value(request, p::kFunctionPrefix);
    auto verdicts = list_value(request, p::kVerdictsPrefix);
    std::vector<std::string> flagged;
    for (const auto& v : verdicts) {
        auto eq = v.find('=');
        if (eq != std::string::npos && text::iequals(text::trim(std::string_view(v).substr(eq + 1)), "yes")) {
            flagged.push_back(v.substr(0, eq));
        }
    }
    std::string s = "SUMMARY: Function " + name + " calls " + join_names(called_functions(code)) + ".";
    if (flagged.empty()) {
        s += " No weakness was found; the function looks clean.";
    } else {
        s += " Flagged for " + text::join(flagged, ", ") + ".";
    }
    return s;
}

std::string chunk_summary(std::string_view code, std::string_view request) {
    constexpr std::size_t kMaxNames = 12;
    std::vector<std::string> names;
    auto previous = line_value(request, p::kPreviousSummaryPrefix);
    if (auto at = previous.find("calls "); at != std::string::npos) {
        auto rest = previous.substr(at + 6);
        if (!rest.empty() && rest.back() == '.') rest.pop_back();
        for (auto& n : text::split(rest, ',')) {
            auto t = std::string(text::trim(n));
            if (!t.empty() && t != "no other functions") names.push_back(t);
        }
    }
    for (auto& n : called_functions(code)) {
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
    if (names.size() > kMaxNames) names.erase(names.begin(), names.end() - kMaxNames);
    return "SUMMARY: The code so far calls " + join_names(names) + ".";
}

}  // namespace

std::string MockBackend::send(const std::vector<ChatMessage>& messages, const LlmConfig&) {
    for (const auto& m : messages) {
        if (m.content.find(kFailMarker) != std::string::npos) {
            throw TransportError("mock backend: failure marker present", false);
        }
    }
    std::optional<std::string> task;
    for (const auto& m : messages) {
        if (m.role == Role::system) {
            task = p::task_of(m.content);
            break;
        }
    }
    const ChatMessage* request = nullptr;
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        if (it->role == Role::user) {
            request = &*it;
            break;
        }
    }
    if (!task || !request) return "I need a task and a request.";

    // A repair turn carries no code; answer the original request again.
    if (request->content == p::kRepairPrompt) {
        for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
            if (it->role == Role::user && it->content != p::kRepairPrompt) {
                request = &*it;
                break;
            }
        }
    }
    std::string code;
    for (const auto& block : p::fenced_blocks(request->content)) code = block;

    if (*task == p::kTaskClassify) return classify(code, request->content);
    if (*task == p::kTaskPlan) return decide(code);
    if (*task == p::kTaskRename) return rename(code);
    if (*task == p::kTaskStructs) return structs(code);
    if (*task == p::kTaskAnnotate) return annotate(code);
    if (*task == p::kTaskSummary) return summarize(code, request->content);
    if (*task == p::kTaskChunkSummary) return chunk_summary(code, request->content);
    return "Unknown task.";
}

}  // namespace vulbin::llm
