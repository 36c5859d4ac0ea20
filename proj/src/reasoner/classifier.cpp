#include "vulbin/reasoner/classifier.hpp"

#include "vulbin/common/hash.hpp"
#include "vulbin/common/text.hpp"
#include "vulbin/lang/lexer.hpp"
#include "vulbin/llm/protocol.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <regex>
#include <set>

namespace vulbin::reasoner {

namespace p = llm::protocol;
using llm::ChatMessage;
using llm::Role;

namespace {

constexpr std::string_view kInstructions =
    "You are a security analyst reviewing C pseudo-code recovered from a stripped binary. For every CWE in the "
    "list, decide whether the function contains that weakness. Reason in three steps: the functionality of the "
    "code, the root cause of any weakness, and its potential impact. Answer with one fenced block holding, for each "
    "CWE, a line 'CWE-<id>:', a line 'ANSWER: yes' or 'ANSWER: no', and a line 'REASON: Functionality: ... Root "
    "cause: ... Impact: ...'.";

constexpr std::string_view kQuestion =
    "For each CWE in the list, first describe the functionality, then the root cause, then the impact, and answer "
    "yes or no.";

constexpr std::uint64_t kRollingSummaryTokens = 128;

const std::regex kAnswer(R"(^\s*answer\s*:\s*(yes|no)\b.*$)", std::regex::icase);
const std::regex kReason(R"(^\s*reason\s*:\s*(.*?)\s*$)", std::regex::icase);
const std::regex kConfidence(R"(^\s*confidence\s*:\s*([0-9]*\.?[0-9]+)\s*$)", std::regex::icase);
const std::regex kSection(R"(^\s*(cwe-[0-9]+)\b[^:]*:\s*$)", std::regex::icase);

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

std::string shot_reply(const KnowledgeDoc& doc, Verdict expected) {
    std::string body = doc.cwe_id + ":\n";
    if (expected == Verdict::yes) {
        body += "ANSWER: yes\nREASON: Functionality: the example handles external data. Root cause: it follows the "
                "vulnerable pattern of " + doc.name + ". Impact: an attacker can exploit the " + doc.name + ".\n";
    } else {
        body += "ANSWER: no\nREASON: Functionality: the example handles external data. Root cause: the data is "
                "validated or constrained before use. Impact: none.\n";
    }
    return p::fence(body);
}

std::string verdict_line(const std::vector<CweVerdict>& verdicts) {
    std::vector<std::string> parts;
    for (const auto& v : verdicts) parts.push_back(v.cwe_id + "=" + std::string(to_string(v.verdict)));
    return text::join(parts, ", ");
}

}  // namespace

std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::no: return "no";
    case Verdict::invalid: return "invalid";
    }
    return "?";
}

std::vector<std::string> choose_distractors(std::string_view function_id, std::string_view target, unsigned k,
                                            std::uint64_t seed, const std::vector<std::string>& pool) {
    std::vector<std::string> candidates;
    for (const auto& c : pool) {
        if (c != target && std::find(candidates.begin(), candidates.end(), c) == candidates.end()) {
            candidates.push_back(c);
        }
    }
    std::mt19937_64 rng(fnv1a64(function_id) ^ seed);
    const std::size_t n = std::min<std::size_t>(k, candidates.size());
    // Partial Fisher-Yates; modulo keeps the draw identical across standard libraries.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng() % (candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(n);
    return candidates;
}

std::vector<IclShot> shots_for(const KnowledgeBase& kb, std::string_view target) {
    const auto& doc = kb.at(target);
    return {{doc.cwe_id, doc.vulnerable_example, Verdict::yes}, {doc.cwe_id, doc.patched_example, Verdict::no}};
}

std::vector<ChatMessage> build_prompt(const CweQuery& q, const KnowledgeBase& kb, std::uint64_t budget_tokens) {
    std::vector<std::string> cwes = q.distractors;
    cwes.push_back(q.target_cwe);
    std::sort(cwes.begin(), cwes.end(), cwe_less);
    cwes.erase(std::unique(cwes.begin(), cwes.end()), cwes.end());

    std::vector<ChatMessage> head;
    head.push_back({Role::system, p::task_line(p::kTaskClassify) + "\n" + std::string(kInstructions)});
    std::string desc = "Weakness descriptions:\n";
    for (const auto& id : cwes) {
        const auto& doc = kb.at(id);
        desc += "\n" + doc.cwe_id + " " + doc.name + ":\n" + doc.description + "\n";
    }
    head.push_back({Role::user, desc});

    std::vector<std::pair<ChatMessage, ChatMessage>> shots;
    for (const auto& s : q.icl_shots) {
        const auto& doc = kb.at(s.cwe_id);
        shots.push_back({{Role::user, "Example:\n" + p::fence(s.code, "c") + "\n" + std::string(p::kCweListPrefix) + s.cwe_id},
                         {Role::assistant, shot_reply(doc, s.expected)}});
    }

    std::string ask;
    if (!q.rolling_summary.empty()) ask += "Summary of the preceding parts: " + q.rolling_summary + "\n\n";
    ask += "Function " + (q.function_name.empty() ? q.function_id : q.function_name);
    if (!q.part_label.empty()) ask += " (" + q.part_label + ")";
    ask += ":\n" + p::fence(q.code, "c") + "\n" + std::string(p::kCweListPrefix) + text::join(cwes, ", ") + "\n" +
           std::string(kQuestion);
    ChatMessage question{Role::user, ask};

    auto context_message = [](const std::vector<memory::ContextItem>& items) {
        std::string s = "Summaries of functions called by this one:\n";
        for (const auto& it : items) s += "- " + it.function_id + ": " + it.summary + "\n";
        return ChatMessage{Role::user, s};
    };
    auto assemble = [&](std::size_t n_shots, std::size_t n_context) {
        std::vector<ChatMessage> out = head;
        for (std::size_t i = 0; i < n_shots; ++i) {
            out.push_back(shots[i].first);
            out.push_back(shots[i].second);
        }
        if (n_context > 0) {
            out.push_back(context_message({q.context.items.begin(),
                                           q.context.items.begin() + static_cast<std::ptrdiff_t>(n_context)}));
        }
        out.push_back(question);
        return out;
    };

    std::size_t n_shots = shots.size(), n_context = q.context.items.size();
    for (;;) {
        auto prompt = assemble(n_shots, n_context);
        if (llm::count_tokens(prompt) <= budget_tokens) return prompt;
        if (n_context > 0) --n_context;
        else if (n_shots > 0) --n_shots;
        else break;
    }
    throw Error(ErrorCode::BudgetOverflow, "prompt for " + q.function_id + " exceeds " + std::to_string(budget_tokens) +
                                               " tokens without context and examples");
}

std::vector<std::string> prompt_cwes(const std::vector<ChatMessage>& prompt) {
    for (auto it = prompt.rbegin(); it != prompt.rend(); ++it) {
        if (it->role != Role::user) continue;
        for (auto line : text::split_lines(it->content)) {
            if (!line.starts_with(p::kCweListPrefix)) continue;
            std::vector<std::string> out;
            for (auto& part : text::split(line.substr(p::kCweListPrefix.size()), ',')) {
                auto t = text::trim(part);
                if (!t.empty()) out.emplace_back(t);
            }
            return out;
        }
        break;
    }
    return {};
}

ParsedAnswer parse_verdict(std::string_view reply) {
    std::string body = p::last_fenced_block(reply).value_or(std::string(reply));
    auto lines = text::split_lines(body);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string line(lines[i]);
        std::smatch m;
        if (!std::regex_match(line, m, kAnswer)) continue;
        ParsedAnswer out{text::iequals(m[1].str(), "yes") ? Verdict::yes : Verdict::no, {}, std::nullopt};
        for (std::size_t j = i + 1; j < lines.size(); ++j) {
            std::string next(lines[j]);
            std::smatch r;
            if (std::regex_match(next, r, kConfidence)) {
                out.confidence = std::clamp(std::stod(r[1].str()), 0.0, 1.0);
                continue;
            }
            if (std::regex_match(next, r, kReason)) {
                out.rationale = r[1].str();
                // Continuation lines up to the next blank line or field.
                for (std::size_t k = j + 1; k < lines.size(); ++k) {
                    std::string more(text::trim(lines[k]));
                    if (more.empty() || std::regex_match(more, kAnswer) || std::regex_match(more, kSection) ||
                        std::regex_match(more, kConfidence)) {
                        break;
                    }
                    out.rationale += " " + more;
                }
                continue;
            }
            if (std::regex_match(next, kAnswer) || std::regex_match(next, kSection)) break;
        }
        return out;
    }
    throw Error(ErrorCode::ParseFailure, "no 'ANSWER: yes|no' line in reply");
}

std::map<std::string, ParsedAnswer> parse_verdicts(std::string_view reply, const std::vector<std::string>& cwes) {
    std::string body = p::last_fenced_block(reply).value_or(std::string(reply));
    std::map<std::string, ParsedAnswer> out;
    std::vector<std::pair<std::string, std::string>> sections;
    for (auto line : text::split_lines(body)) {
        std::string s(line);
        std::smatch m;
        if (std::regex_match(s, m, kSection)) {
            sections.emplace_back(upper(m[1].str()), std::string());
        } else if (!sections.empty()) {
            sections.back().second += s + "\n";
        }
    }
    if (sections.empty()) {
        if (!cwes.empty()) {
            try {
                out.emplace(cwes.front(), parse_verdict(body));
            } catch (const Error&) {
            }
        }
        return out;
    }
    for (const auto& [id, section] : sections) {
        if (out.contains(id)) continue;
        try {
            out.emplace(id, parse_verdict(section));
        } catch (const Error&) {
        }
    }
    return out;
}

std::vector<std::string> split_chunks(std::string_view code, std::size_t max_bytes) {
    if (max_bytes == 0) throw Error(ErrorCode::BudgetOverflow, "chunk size must be positive");
    if (code.size() <= max_bytes) return {std::string(code)};

    auto tokens = lang::code_tokens(code, lang::LexMode::Lenient);
    std::vector<std::size_t> starts;       // every line start except 0
    std::vector<std::size_t> preferred;    // depth <= 1 or after a blank line
    std::size_t tok = 0;
    int depth = 0;
    std::size_t line_begin = 0;
    for (std::size_t i = 0; i < code.size(); ++i) {
        if (code[i] != '\n' || i + 1 >= code.size()) continue;
        std::size_t start = i + 1;
        for (; tok < tokens.size() && tokens[tok].offset < start; ++tok) {
            if (tokens[tok].punct("{")) ++depth;
            else if (tokens[tok].punct("}")) --depth;
        }
        bool blank = text::trim(code.substr(line_begin, i - line_begin)).empty();
        starts.push_back(start);
        if (depth <= 1 || blank) preferred.push_back(start);
        line_begin = start;
    }
    auto furthest = [](const std::vector<std::size_t>& cuts, std::size_t lo, std::size_t hi) -> std::optional<std::size_t> {
        auto it = std::upper_bound(cuts.begin(), cuts.end(), hi);
        if (it == cuts.begin()) return std::nullopt;
        --it;
        if (*it <= lo) return std::nullopt;
        return *it;
    };
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (code.size() - pos > max_bytes) {
        std::size_t limit = pos + max_bytes;
        auto cut = furthest(preferred, pos, limit);
        if (!cut) cut = furthest(starts, pos, limit);
        if (!cut) {
            std::size_t n = text::utf8_safe_prefix(code.substr(pos), max_bytes);
            cut = pos + std::max<std::size_t>(n, 1);
        }
        out.emplace_back(code.substr(pos, *cut - pos));
        pos = *cut;
    }
    out.emplace_back(code.substr(pos));
    return out;
}

std::string mechanical_summary(std::string_view function_id, const std::vector<CweVerdict>& verdicts) {
    std::vector<std::string> flagged;
    for (const auto& v : verdicts) {
        if (v.verdict == Verdict::yes) flagged.push_back(v.cwe_id);
    }
    if (flagged.empty()) return "function " + std::string(function_id) + ": clean";
    return "function " + std::string(function_id) + ": flagged {" + text::join(flagged, ", ") + "}";
}

Classifier::Classifier(const KnowledgeBase& kb, llm::LlmHandle llm, ReasonerOptions options)
    : kb_(kb), llm_(llm), options_(std::move(options)) {}

std::uint64_t Classifier::budget() const { return llm_.prompt_budget(); }

CweVerdict Classifier::ask(const CweQuery& q, const std::vector<ChatMessage>& prompt) const {
    CweVerdict v{q.function_id, q.target_cwe, Verdict::invalid, {}, 1.0, false};
    auto cwes = prompt_cwes(prompt);
    std::vector<ChatMessage> messages = prompt;
    for (int turn = 0; turn < 2; ++turn) {
        std::string reply;
        try {
            reply = llm_.complete(messages);
        } catch (const Error& e) {
            v.transport_failure = e.code() != ErrorCode::BudgetOverflow;
            v.rationale = (v.transport_failure ? "llm failure: " : "parse failure: ") + std::string(e.what());
            return v;
        }
        auto parsed = parse_verdicts(reply, cwes);
        if (auto it = parsed.find(q.target_cwe); it != parsed.end()) {
            v.verdict = it->second.verdict;
            v.rationale = it->second.rationale;
            v.confidence = it->second.confidence.value_or(1.0);
            return v;
        }
        messages.push_back({Role::assistant, reply.empty() ? std::string("(empty)") : reply});
        messages.push_back({Role::user, std::string(p::kRepairPrompt)});
    }
    v.rationale = "parse failure: no answer for " + q.target_cwe + " after one repair prompt";
    return v;
}

std::vector<CweVerdict> Classifier::classify(const FunctionInput& fn, const std::vector<std::string>& targets,
                                             const memory::AnalysisQueue* mem) const {
    std::vector<CweVerdict> out;
    std::vector<std::string> overflow;
    for (const auto& target : targets) {
        CweQuery q;
        q.function_id = fn.function_id;
        q.function_name = fn.name;
        q.code = fn.code;
        q.target_cwe = target;
        q.distractors = choose_distractors(fn.function_id, target, options_.k_distractors, options_.seed,
                                           options_.distractor_pool);
        if (options_.icl_shots) q.icl_shots = shots_for(kb_, target);
        std::vector<ChatMessage> prompt;
        try {
            prompt = build_prompt(q, kb_, budget());
        } catch (const Error& e) {
            if (e.code() != ErrorCode::BudgetOverflow) throw;
            overflow.push_back(target);
            out.push_back({fn.function_id, target, Verdict::invalid, "pending chunked analysis", 1.0, false});
            continue;
        }
        if (mem) {
            auto used = llm::count_tokens(prompt);
            if (used < budget()) {
                q.context = mem->fetch_context(fn.function_id, budget() - used);
                if (!q.context.empty()) prompt = build_prompt(q, kb_, budget());
            }
        }
        out.push_back(ask(q, prompt));
    }
    if (!overflow.empty()) {
        auto chunked = classify_chunked(fn, overflow);
        for (auto& v : out) {
            auto it = std::find_if(chunked.begin(), chunked.end(), [&](const CweVerdict& c) { return c.cwe_id == v.cwe_id; });
            if (it != chunked.end()) v = *it;
        }
    }
    return out;
}

std::vector<CweVerdict> Classifier::classify_chunked(const FunctionInput& fn, const std::vector<std::string>& targets,
                                                     std::vector<ChunkTrace>* trace) const {
    // Prompt cost without code, with a full-size rolling summary.
    std::uint64_t overhead = 0;
    std::vector<std::vector<std::string>> distractors;
    for (const auto& target : targets) {
        CweQuery q;
        q.function_id = fn.function_id;
        q.function_name = fn.name;
        q.target_cwe = target;
        q.distractors = choose_distractors(fn.function_id, target, options_.k_distractors, options_.seed,
                                           options_.distractor_pool);
        q.rolling_summary.assign(kRollingSummaryTokens * 4, 'x');
        q.part_label = "part 99999 of 99999";
        distractors.push_back(q.distractors);
        std::vector<ChatMessage> probe;
        try {
            probe = build_prompt(q, kb_, std::numeric_limits<std::uint64_t>::max());
        } catch (const Error&) {
            throw;
        }
        overhead = std::max(overhead, llm::count_tokens(probe));
    }
    std::vector<CweVerdict> out;
    if (overhead + 2 >= budget()) {
        for (const auto& t : targets) {
            out.push_back({fn.function_id, t, Verdict::invalid, "parse failure: prompt overhead exceeds the budget", 1.0,
                           false});
        }
        return out;
    }
    const std::size_t max_bytes = static_cast<std::size_t>(budget() - overhead - 1) * 4;
    auto chunks = split_chunks(fn.code, max_bytes);

    std::vector<std::vector<CweVerdict>> per_chunk;
    std::string rolling;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        ChunkTrace step{chunks[i], rolling, {}};
        std::vector<CweVerdict> verdicts;
        for (std::size_t t = 0; t < targets.size(); ++t) {
            CweQuery q;
            q.function_id = fn.function_id;
            q.function_name = fn.name;
            q.code = chunks[i];
            q.target_cwe = targets[t];
            q.distractors = distractors[t];
            q.rolling_summary = rolling;
            q.part_label = "part " + std::to_string(i + 1) + " of " + std::to_string(chunks.size());
            auto v = ask(q, build_prompt(q, kb_, budget()));
            step.verdicts[v.cwe_id] = v.verdict;
            verdicts.push_back(std::move(v));
        }
        per_chunk.push_back(std::move(verdicts));
        if (trace) trace->push_back(std::move(step));
        if (i + 1 == chunks.size()) break;

        std::vector<ChatMessage> msgs{
            {Role::system, p::task_line(p::kTaskChunkSummary) +
                               "\nSummarize what the code seen so far does in one or two sentences, starting with "
                               "'SUMMARY:'."},
            {Role::user, std::string(p::kPreviousSummaryPrefix) + (rolling.empty() ? "none" : rolling) + "\n" +
                             p::fence(chunks[i], "c")}};
        try {
            auto reply = llm_.complete(msgs);
            auto at = reply.find("SUMMARY:");
            std::string s(text::trim(at == std::string::npos ? std::string_view(reply) : std::string_view(reply).substr(at + 8)));
            if (!s.empty()) rolling = memory::truncate_summary(s, kRollingSummaryTokens);
        } catch (const Error&) {
            // Keep the previous summary.
        }
    }

    for (std::size_t t = 0; t < targets.size(); ++t) {
        CweVerdict v{fn.function_id, targets[t], Verdict::no, {}, 1.0, false};
        std::vector<std::string> yes, all;
        bool invalid = false, transport = false;
        double confidence = 0.0;
        for (std::size_t i = 0; i < per_chunk.size(); ++i) {
            const auto& c = per_chunk[i][t];
            std::string note = "chunk " + std::to_string(i + 1) + ": " + c.rationale;
            all.push_back(note);
            if (c.verdict == Verdict::yes) {
                yes.push_back(note);
                confidence = std::max(confidence, c.confidence);
            }
            if (c.verdict == Verdict::invalid) invalid = true;
            transport = transport || c.transport_failure;
        }
        if (!yes.empty()) {
            v.verdict = Verdict::yes;
            v.rationale = text::join(yes, " | ");
            v.confidence = confidence;
        } else {
            v.verdict = invalid ? Verdict::invalid : Verdict::no;
            v.rationale = text::join(all, " | ");
            v.transport_failure = transport;
        }
        out.push_back(std::move(v));
    }
    return out;
}

memory::AnalysisRecord Classifier::summarize(const FunctionInput& fn, const std::vector<CweVerdict>& verdicts,
                                             std::vector<std::string> callees) const {
    memory::AnalysisRecord r;
    r.function_id = fn.function_id;
    r.callees = std::move(callees);
    r.model_tag = llm_.config().model_tag;
    for (const auto& v : verdicts) {
        if (v.verdict == Verdict::yes) r.suspected.push_back({v.cwe_id, v.confidence});
        r.verdicts.push_back({v.cwe_id, std::string(to_string(v.verdict)), v.rationale, v.confidence});
    }
    std::string code(fn.code.substr(0, text::utf8_safe_prefix(fn.code, budget() * 2)));
    std::vector<ChatMessage> msgs{
        {Role::system, p::task_line(p::kTaskSummary) +
                           "\nSummarize the function for later analyses of its callers: what it does and which "
                           "weaknesses were found. Start the reply with 'SUMMARY:'."},
        {Role::user, std::string(p::kFunctionPrefix) + (fn.name.empty() ? fn.function_id : fn.name) + "\n" +
                         std::string(p::kVerdictsPrefix) + verdict_line(verdicts) + "\n" + p::fence(code, "c")}};
    std::string summary;
    try {
        auto reply = llm_.complete(msgs);
        auto at = reply.find("SUMMARY:");
        summary = std::string(text::trim(at == std::string::npos ? std::string_view(reply) : std::string_view(reply).substr(at + 8)));
    } catch (const Error&) {
        summary.clear();
    }
    if (summary.empty()) summary = mechanical_summary(fn.function_id, verdicts);
    r.summary = memory::truncate_summary(summary, options_.summary_token_cap);
    return r;
}

}  // namespace vulbin::reasoner
