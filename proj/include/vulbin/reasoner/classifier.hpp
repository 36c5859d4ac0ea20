#pragma once

#include "vulbin/llm/client.hpp"
#include "vulbin/memory/queue.hpp"
#include "vulbin/reasoner/knowledge.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vulbin::reasoner {

enum class Verdict { yes, no, invalid };
std::string_view to_string(Verdict v);

struct CweVerdict {
    std::string function_id;
    std::string cwe_id;
    Verdict verdict = Verdict::invalid;
    std::string rationale;
    double confidence = 1.0;
    bool transport_failure = false;  // the backend never answered
};

struct IclShot {
    std::string cwe_id;
    std::string code;
    Verdict expected = Verdict::no;
};

struct CweQuery {
    std::string function_id;
    std::string function_name;
    std::string code;
    std::string target_cwe;
    std::vector<std::string> distractors;
    memory::ContextBundle context;
    std::vector<IclShot> icl_shots;
    std::string rolling_summary;  // chunked analysis only
    std::string part_label;       // chunked analysis only, e.g. "part 2 of 5"
};

struct ReasonerOptions {
    unsigned k_distractors = 2;
    std::uint64_t seed = 0;
    std::vector<std::string> distractor_pool = kDistractorPool;
    std::uint64_t summary_token_cap = 256;
    bool icl_shots = true;
};

// k distinct ids from pool \ {target}, a pure function of (function_id, target, seed).
std::vector<std::string> choose_distractors(std::string_view function_id, std::string_view target, unsigned k,
                                            std::uint64_t seed, const std::vector<std::string>& pool = kDistractorPool);

// Vulnerable (yes) and patched (no) shots from the target's document.
std::vector<IclShot> shots_for(const KnowledgeBase& kb, std::string_view target);

// Drops context, then shots, until the prompt fits `budget_tokens`.
// Errors: BudgetOverflow when the remaining prompt still does not fit;
// KnowledgeError when a named CWE has no document.
std::vector<llm::ChatMessage> build_prompt(const CweQuery& q, const KnowledgeBase& kb, std::uint64_t budget_tokens);

// The CWE ids a prompt asks about, from its question line.
std::vector<std::string> prompt_cwes(const std::vector<llm::ChatMessage>& prompt);

struct ParsedAnswer {
    Verdict verdict;
    std::string rationale;
    std::optional<double> confidence;
};

// First "ANSWER: yes|no" (fenced or bare, any case) and its "REASON:".
// Errors: ParseFailure.
ParsedAnswer parse_verdict(std::string_view text);

// Per-CWE sections ("CWE-78:" header lines). A reply without headers is
// attributed to `cwes.front()`. Sections that do not parse are left out.
std::map<std::string, ParsedAnswer> parse_verdicts(std::string_view text, const std::vector<std::string>& cwes);

struct FunctionInput {
    std::string function_id;
    std::string name;  // display name used in prompts
    std::string code;  // enhanced code
};

struct ChunkTrace {
    std::string text;             // the slice of the original code
    std::string rolling_summary;  // summary sent with this chunk
    std::map<std::string, Verdict> verdicts;
};

class Classifier {
public:
    Classifier(const KnowledgeBase& kb, llm::LlmHandle llm, ReasonerOptions options = {});

    // One prompt per target. Targets whose prompt does not fit go through
    // classify_chunked.
    std::vector<CweVerdict> classify(const FunctionInput& fn, const std::vector<std::string>& targets,
                                     const memory::AnalysisQueue* mem = nullptr) const;

    std::vector<CweVerdict> classify_chunked(const FunctionInput& fn, const std::vector<std::string>& targets,
                                             std::vector<ChunkTrace>* trace = nullptr) const;

    // Errors: none; falls back to a mechanical summary.
    memory::AnalysisRecord summarize(const FunctionInput& fn, const std::vector<CweVerdict>& verdicts,
                                     std::vector<std::string> callees = {}) const;

    const ReasonerOptions& options() const { return options_; }

private:
    CweVerdict ask(const CweQuery& q, const std::vector<llm::ChatMessage>& prompt) const;
    std::uint64_t budget() const;

    const KnowledgeBase& kb_;
    llm::LlmHandle llm_;
    ReasonerOptions options_;
};

// Splits at line starts where the brace depth is at most 1 or after a blank
// line; falls back to any line start, then to a UTF-8 safe byte cut. Every
// chunk is at most max_bytes and the concatenation is the input.
std::vector<std::string> split_chunks(std::string_view code, std::size_t max_bytes);

std::string mechanical_summary(std::string_view function_id, const std::vector<CweVerdict>& verdicts);

}  // namespace vulbin::reasoner
