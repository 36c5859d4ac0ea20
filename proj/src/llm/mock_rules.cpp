#include "vulbin/lang/lexer.hpp"
#include "vulbin/llm/mock_backend.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace vulbin::llm::mock_rules {

using lang::Token;
using lang::TokenKind;

namespace {

using Tokens = std::vector<Token>;

struct Range {
    std::size_t begin;
    std::size_t end;  // exclusive
    bool empty() const { return begin >= end; }
    std::size_t size() const { return end - begin; }
};

struct Call {
    std::size_t name;  // index of the callee identifier
    std::size_t open;
    std::size_t close;
    std::vector<Range> args;
    std::string callee;
    int line;
};

std::size_t matching(const Tokens& t, std::size_t open) {
    std::string_view o = t[open].text;
    std::string_view c = o == "(" ? ")" : o == "[" ? "]" : "}";
    int depth = 0;
    for (std::size_t i = open; i < t.size(); ++i) {
        if (t[i].kind != TokenKind::Punct) continue;
        if (t[i].text == o) ++depth;
        else if (t[i].text == c && --depth == 0) return i;
    }
    return t.size();
}

std::vector<Call> find_calls(const Tokens& t) {
    std::vector<Call> calls;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        if (t[i].kind != TokenKind::Identifier || !t[i + 1].punct("(")) continue;
        Call c{i, i + 1, matching(t, i + 1), {}, std::string(t[i].text), t[i].line};
        if (c.close >= t.size()) continue;
        std::size_t start = c.open + 1;
        int depth = 0;
        for (std::size_t k = start; k < c.close; ++k) {
            if (t[k].punct("(") || t[k].punct("[") || t[k].punct("{")) ++depth;
            else if (t[k].punct(")") || t[k].punct("]") || t[k].punct("}")) --depth;
            else if (depth == 0 && t[k].punct(",")) {
                c.args.push_back({start, k});
                start = k + 1;
            }
        }
        if (start < c.close) c.args.push_back({start, c.close});
        calls.push_back(std::move(c));
    }
    return calls;
}

bool type_token(const Token& tok) {
    return tok.kind == TokenKind::Identifier || tok.kind == TokenKind::Keyword || tok.punct("*");
}

// Drops leading casts "(type *)" and address-of "&".
Range strip_arg(const Tokens& t, Range r) {
    for (;;) {
        if (r.empty()) return r;
        if (t[r.begin].punct("&")) {
            ++r.begin;
            continue;
        }
        if (t[r.begin].punct("(")) {
            std::size_t close = matching(t, r.begin);
            if (close + 1 < r.end) {
                bool cast = close > r.begin + 1;
                for (std::size_t k = r.begin + 1; k < close; ++k) cast = cast && type_token(t[k]);
                if (cast) {
                    r.begin = close + 1;
                    continue;
                }
            }
            if (close + 1 == r.end && close > r.begin + 1) {  // fully parenthesised
                r = {r.begin + 1, close};
                continue;
            }
        }
        return r;
    }
}

std::optional<std::string> single_ident(const Tokens& t, Range r) {
    r = strip_arg(t, r);
    if (r.size() == 1 && t[r.begin].kind == TokenKind::Identifier) return std::string(t[r.begin].text);
    return std::nullopt;
}

bool literal_string(const Tokens& t, Range r) {
    r = strip_arg(t, r);
    if (r.empty()) return false;
    for (std::size_t k = r.begin; k < r.end; ++k) {
        if (t[k].kind != TokenKind::String) return false;
    }
    return true;
}

bool literal_number(const Tokens& t, Range r) {
    r = strip_arg(t, r);
    return r.size() == 1 && (t[r.begin].kind == TokenKind::Number || t[r.begin].kind == TokenKind::Char);
}

bool has_ident(const Tokens& t, Range r) {
    for (std::size_t k = r.begin; k < r.end; ++k) {
        if (t[k].kind == TokenKind::Identifier) return true;
    }
    return false;
}

bool mentions(const Tokens& t, Range r, std::string_view name) {
    for (std::size_t k = r.begin; k < r.end; ++k) {
        if (t[k].is(TokenKind::Identifier, name)) return true;
    }
    return false;
}

bool arithmetic(const Tokens& t, Range r) {
    bool op = false;
    for (std::size_t k = r.begin; k < r.end; ++k) {
        if (t[k].punct("+") || t[k].punct("<<") || (t[k].punct("*") && k > r.begin &&
                                                    (t[k - 1].kind == TokenKind::Identifier ||
                                                     t[k - 1].kind == TokenKind::Number || t[k - 1].punct(")")))) {
            op = true;
        }
    }
    return op && has_ident(t, r);
}

// Index of the token ending the statement that starts at `from`.
std::size_t statement_end(const Tokens& t, std::size_t from) {
    int depth = 0;
    for (std::size_t k = from; k < t.size(); ++k) {
        if (t[k].punct("(") || t[k].punct("[")) ++depth;
        else if (t[k].punct(")") || t[k].punct("]")) --depth;
        else if (depth <= 0 && (t[k].punct(";") || t[k].punct("{") || t[k].punct("}"))) return k;
    }
    return t.size();
}

// `name = ...` assignment (not ==, not declaration-with-type check).
bool assigns(const Tokens& t, std::size_t k, std::string_view name) {
    return t[k].is(TokenKind::Identifier, name) && k + 1 < t.size() && t[k + 1].punct("=");
}

// Condition range of an if/while at index k (keyword), if well formed.
std::optional<Range> condition_of(const Tokens& t, std::size_t k) {
    if (k + 1 >= t.size() || !t[k + 1].punct("(")) return std::nullopt;
    std::size_t close = matching(t, k + 1);
    if (close >= t.size()) return std::nullopt;
    return Range{k + 2, close};
}

struct ForHeader {
    std::size_t keyword;
    Range init, cond, step;
    std::size_t close;
};

std::optional<ForHeader> for_header(const Tokens& t, std::size_t k) {
    if (!t[k].is(TokenKind::Keyword, "for") || k + 1 >= t.size() || !t[k + 1].punct("(")) return std::nullopt;
    std::size_t close = matching(t, k + 1);
    if (close >= t.size()) return std::nullopt;
    std::vector<std::size_t> semis;
    int depth = 0;
    for (std::size_t i = k + 2; i < close; ++i) {
        if (t[i].punct("(")) ++depth;
        else if (t[i].punct(")")) --depth;
        else if (depth == 0 && t[i].punct(";")) semis.push_back(i);
    }
    if (semis.size() != 2) return std::nullopt;
    return ForHeader{k, {k + 2, semis[0]}, {semis[0] + 1, semis[1]}, {semis[1] + 1, close}, close};
}

const std::unordered_set<std::string_view> kCommandCalls = {"system", "popen",  "_popen", "execl",  "execlp",
                                                            "execle", "execv",  "execvp", "execve", "_wsystem",
                                                            "wsystem"};
const std::unordered_map<std::string_view, std::size_t> kFormatArg = {
    {"printf", 0},  {"vprintf", 0},  {"wprintf", 0},  {"fprintf", 1},   {"vfprintf", 1},
    {"fwprintf", 1}, {"dprintf", 1}, {"sprintf", 1},  {"vsprintf", 1},  {"syslog", 1},
    {"snprintf", 2}, {"vsnprintf", 2}, {"swprintf", 2}};
const std::unordered_set<std::string_view> kUnboundedCopy = {"strcpy", "strcat", "wcscpy", "wcscat", "gets", "stpcpy"};
const std::unordered_set<std::string_view> kSizedWrite = {"memcpy", "memmove", "memset", "wmemcpy",
                                                          "wmemmove", "strncpy", "strncat"};
const std::unordered_map<std::string_view, std::size_t> kAllocSizeArg = {
    {"malloc", 0}, {"realloc", 1}, {"alloca", 0}, {"_alloca", 0}, {"operator_new", 0}};
const std::unordered_set<std::string_view> kAllocators = {"malloc", "calloc", "realloc"};
const std::unordered_set<std::string_view> kNumberParsers = {"atoi",   "atol",    "atoll",  "strtol",
                                                             "strtoul", "strtoll", "strtoull"};

void add(std::vector<Finding>& out, std::string cwe, int line, std::string call, std::string root, std::string impact) {
    out.push_back({std::move(cwe), line, std::move(call), std::move(root), std::move(impact)});
}

void command_injection(const Tokens& t, const std::vector<Call>& calls, std::vector<Finding>& out) {
    for (const auto& c : calls) {
        if (!kCommandCalls.contains(c.callee) || c.args.empty() || literal_string(t, c.args[0])) continue;
        add(out, "CWE-78", c.line, c.callee,
            "the command string passed to " + c.callee + "() is not a constant and can carry externally controlled data",
            "an attacker can inject shell metacharacters and run arbitrary OS commands");
    }
}

void format_string(const Tokens& t, const std::vector<Call>& calls, std::vector<Finding>& out) {
    for (const auto& c : calls) {
        auto it = kFormatArg.find(c.callee);
        if (it == kFormatArg.end() || c.args.size() <= it->second || literal_string(t, c.args[it->second])) continue;
        add(out, "CWE-134", c.line, c.callee,
            "the format argument of " + c.callee + "() is not a string literal",
            "attacker-supplied conversion specifiers can leak memory or write through %n");
    }
}

void unbounded_copy(const Tokens& t, const std::vector<Call>& calls, std::vector<Finding>& out) {
    for (const auto& c : calls) {
        bool flagged = kUnboundedCopy.contains(c.callee);
        if (!flagged && (c.callee == "sprintf" || c.callee == "vsprintf") && c.args.size() > 1) {
            Range f = strip_arg(t, c.args[1]);
            for (std::size_t k = f.begin; k < f.end; ++k) {
                if (t[k].kind == TokenKind::String && t[k].text.find("%s") != std::string_view::npos) flagged = true;
            }
        }
        if (!flagged) continue;
        add(out, "CWE-121", c.line, c.callee,
            c.callee + "() performs an unbounded copy into a fixed-size stack buffer without checking the source length",
            "a long input overflows the stack buffer and can overwrite the return address");
    }
}

void sized_write(const Tokens& t, const std::vector<Call>& calls, std::vector<Finding>& out) {
    for (const auto& c : calls) {
        if (!kSizedWrite.contains(c.callee) || c.args.size() < 3 || literal_number(t, c.args[2])) continue;
        add(out, "CWE-787", c.line, c.callee,
            c.callee + "() writes a run-time computed number of bytes without checking the destination size",
            "writing past the end of the destination corrupts adjacent memory");
    }
}

void alloc_overflow(const Tokens& t, const std::vector<Call>& calls, std::vector<Finding>& out) {
    for (const auto& c : calls) {
        auto it = kAllocSizeArg.find(c.callee);
        if (it == kAllocSizeArg.end() || c.args.size() <= it->second) continue;
        Range size = strip_arg(t, c.args[it->second]);
        bool flagged = arithmetic(t, size);
        if (!flagged) {
            if (auto var = single_ident(t, size)) {
                // Last assignment to the size variable before the call.
                std::optional<std::size_t> assign;
                for (std::size_t k = 0; k < c.name; ++k) {
                    if (assigns(t, k, *var)) assign = k;
                }
                if (assign) {
                    Range rhs{*assign + 2, statement_end(t, *assign + 2)};
                    bool checked = false;
                    for (std::size_t k = rhs.end; k < c.name; ++k) {
                        if (t[k].is(TokenKind::Keyword, "if")) {
                            if (auto cond = condition_of(t, k); cond && mentions(t, *cond, *var)) checked = true;
                        }
                    }
                    flagged = arithmetic(t, rhs) && !checked;
                }
            }
        }
        if (!flagged) continue;
        add(out, "CWE-190", c.line, c.callee,
            "the size passed to " + c.callee + "() comes from unchecked integer arithmetic that can wrap around",
            "a wrapped size allocates a short buffer that later writes overflow");
    }
}

void unchecked_loop(const Tokens& t, std::vector<Finding>& out) {
    std::set<std::string> tainted;
    std::set<std::string> reported;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k].kind == TokenKind::Identifier && k + 3 < t.size() && t[k + 1].punct("=")) {
            std::string name(t[k].text);
            Range rhs{k + 2, statement_end(t, k + 2)};
            Range stripped = strip_arg(t, rhs);
            bool parsed = !stripped.empty() && t[stripped.begin].kind == TokenKind::Identifier &&
                          kNumberParsers.contains(t[stripped.begin].text) && stripped.size() > 1 &&
                          t[stripped.begin + 1].punct("(");
            auto copy = single_ident(t, rhs);
            if (parsed || (copy && tainted.contains(*copy))) tainted.insert(name);
            else tainted.erase(name);
            continue;
        }
        if (t[k].is(TokenKind::Keyword, "if")) {
            if (auto cond = condition_of(t, k)) {
                for (auto it = tainted.begin(); it != tainted.end();) {
                    it = mentions(t, *cond, *it) ? tainted.erase(it) : std::next(it);
                }
            }
            continue;
        }
        std::optional<Range> cond;
        if (auto hdr = for_header(t, k)) cond = hdr->cond;
        else if (t[k].is(TokenKind::Keyword, "while")) cond = condition_of(t, k);
        if (!cond) continue;
        for (const auto& name : tainted) {
            if (mentions(t, *cond, name) && !reported.contains(name)) {
                reported.insert(name);
                add(out, "CWE-606", t[k].line, std::string(t[k].text),
                    "the loop bound '" + name + "' is parsed from external input and never range-checked",
                    "an attacker controls the iteration count, causing excessive looping or out-of-range accesses");
            }
        }
    }
}

void use_after_free(const Tokens& t, const std::vector<Call>& calls, std::vector<Finding>& out) {
    for (const auto& c : calls) {
        if (c.callee != "free" || c.args.size() != 1) continue;
        auto var = single_ident(t, c.args[0]);
        if (!var) continue;
        for (std::size_t k = c.close + 1; k < t.size(); ++k) {
            if (!t[k].is(TokenKind::Identifier, *var)) continue;
            if (assigns(t, k, *var)) break;
            add(out, "CWE-416", t[k].line, "free",
                "'" + *var + "' is used after being released by free()",
                "the freed memory may be reallocated, letting an attacker corrupt or read unrelated data");
            break;
        }
    }
}

void null_deref(const Tokens& t, const std::vector<Call>& calls, std::vector<Finding>& out) {
    for (std::size_t k = 0; k + 2 < t.size(); ++k) {
        if (t[k].kind != TokenKind::Identifier || !t[k + 1].punct("=")) continue;
        Range rhs = strip_arg(t, {k + 2, statement_end(t, k + 2)});
        if (rhs.size() < 2 || !kAllocators.contains(t[rhs.begin].text) || !t[rhs.begin + 1].punct("(")) continue;
        std::string var(t[k].text);
        for (std::size_t j = rhs.end; j < t.size(); ++j) {
            if ((t[j].is(TokenKind::Keyword, "if") || t[j].is(TokenKind::Keyword, "while"))) {
                if (auto cond = condition_of(t, j); cond && mentions(t, *cond, var)) break;
            }
            if (!t[j].is(TokenKind::Identifier, var)) continue;
            bool deref = false;
            if (j + 1 < t.size() && (t[j + 1].punct("[") || t[j + 1].punct("->"))) deref = true;
            if (j > 0 && t[j - 1].punct("*")) {
                bool unary = j < 2 || !(t[j - 2].kind == TokenKind::Identifier || t[j - 2].kind == TokenKind::Number ||
                                        t[j - 2].punct(")") || t[j - 2].punct("]"));
                deref = deref || unary;
            }
            if (j > 0 && t[j - 1].punct(")")) {
                // *(T *)var  or  *(T *)(var + n)
                for (std::size_t b = j - 1; b > 0; --b) {
                    if (t[b].punct("(")) {
                        deref = deref || (b > 0 && t[b - 1].punct("*"));
                        break;
                    }
                }
            }
            if (j > 1 && t[j - 1].punct("(") && t[j - 2].punct(")")) deref = true;
            for (const auto& c : calls) {
                if ((kUnboundedCopy.contains(c.callee) || kSizedWrite.contains(c.callee)) && !c.args.empty() &&
                    c.args[0].begin <= j && j < c.args[0].end) {
                    deref = true;
                }
            }
            if (!deref && assigns(t, j, var)) break;
            if (deref) {
                add(out, "CWE-476", t[j].line, std::string(t[rhs.begin].text),
                    "the result of " + std::string(t[rhs.begin].text) + "() in '" + var +
                        "' is dereferenced without a NULL check",
                    "an allocation failure crashes the program through a NULL pointer dereference");
                break;
            }
        }
    }
}

bool function_name_at(const Tokens& t, std::size_t k) {
    // Identifier directly before the first '(' at brace depth 0.
    int depth = 0;
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        if (t[i].punct("{")) ++depth;
        else if (t[i].punct("}")) --depth;
        if (depth == 0 && t[i].kind == TokenKind::Identifier && t[i + 1].punct("(")) return i == k;
    }
    return false;
}

std::optional<std::string> own_name(const Tokens& t) {
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        if (t[i].punct("{")) return std::nullopt;
        if (t[i].kind == TokenKind::Identifier && t[i + 1].punct("(")) return std::string(t[i].text);
    }
    return std::nullopt;
}

}  // namespace

std::string cwe_short_name(std::string_view cwe_id) {
    static const std::map<std::string_view, std::string_view> names = {
        {"CWE-78", "OS command injection"},       {"CWE-121", "stack-based buffer overflow"},
        {"CWE-134", "uncontrolled format string"}, {"CWE-190", "integer overflow or wraparound"},
        {"CWE-416", "use after free"},            {"CWE-476", "NULL pointer dereference"},
        {"CWE-606", "unchecked input for loop condition"}, {"CWE-787", "out-of-bounds write"}};
    auto it = names.find(cwe_id);
    return it == names.end() ? std::string(cwe_id) : std::string(it->second);
}

std::vector<Finding> find_weaknesses(std::string_view code) {
    auto t = lang::code_tokens(code, lang::LexMode::Lenient);
    auto calls = find_calls(t);
    std::vector<Finding> out;
    command_injection(t, calls, out);
    format_string(t, calls, out);
    unbounded_copy(t, calls, out);
    sized_write(t, calls, out);
    alloc_overflow(t, calls, out);
    unchecked_loop(t, out);
    use_after_free(t, calls, out);
    null_deref(t, calls, out);
    std::stable_sort(out.begin(), out.end(), [](const Finding& a, const Finding& b) { return a.line < b.line; });
    return out;
}

std::vector<int> pointer_arithmetic_lines(std::string_view code) {
    auto t = lang::code_tokens(code, lang::LexMode::Lenient);
    std::set<int> lines;
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
        // *(T *)(expr) with a computed offset: '+' or '-' and two or more identifiers.
        if (t[k].punct("*") && t[k + 1].punct("(")) {
            std::size_t cast_close = matching(t, k + 1);
            if (cast_close + 1 < t.size() && t[cast_close + 1].punct("(") && cast_close > k + 2 &&
                t[cast_close - 1].punct("*")) {
                std::size_t close = matching(t, cast_close + 1);
                Range inner{cast_close + 2, std::min(close, t.size())};
                int idents = 0;
                bool plus = false;
                for (std::size_t i = inner.begin; i < inner.end; ++i) {
                    idents += t[i].kind == TokenKind::Identifier;
                    plus = plus || t[i].punct("+") || t[i].punct("-");
                }
                if (plus && idents >= 2) lines.insert(t[k].line);
            }
        }
        // base[index] with a run-time index.
        if (t[k].kind == TokenKind::Identifier && t[k + 1].punct("[") && !function_name_at(t, k)) {
            std::size_t close = matching(t, k + 1);
            if (close < t.size() && has_ident(t, {k + 2, close})) lines.insert(t[k].line);
        }
    }
    return {lines.begin(), lines.end()};
}

bool is_generic_name(std::string_view name) {
    static const std::regex re(
        R"(^((param|local|in|unaff|extraout|in_stack)_[0-9A-Za-z_]+|[a-z]{1,5}Var[0-9]+|[a-z]{1,5}Stack_[0-9a-fA-F]+|FUN_[0-9a-fA-F]+)$)");
    return std::regex_match(name.begin(), name.end(), re);
}

std::vector<std::string> called_functions(std::string_view code) {
    auto t = lang::code_tokens(code, lang::LexMode::Lenient);
    auto self = own_name(t);
    std::vector<std::string> out;
    for (const auto& c : find_calls(t)) {
        if (self && c.callee == *self && function_name_at(t, c.name)) continue;
        if (std::find(out.begin(), out.end(), c.callee) == out.end()) out.push_back(c.callee);
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> propose_renames(std::string_view code) {
    auto t = lang::code_tokens(code, lang::LexMode::Lenient);
    auto calls = find_calls(t);
    std::set<std::string> used;
    std::vector<std::string> order;
    for (const auto& tok : t) {
        if (tok.kind != TokenKind::Identifier) continue;
        std::string s(tok.text);
        if (used.insert(s).second && is_generic_name(s)) order.push_back(s);
    }

    std::map<std::string, std::string> wish;  // first rule wins
    auto want = [&](const std::string& old, std::string name) {
        if (is_generic_name(old) && !wish.contains(old)) wish[old] = std::move(name);
    };

    // R1/R2: loop counters by nesting depth, then loop bounds.
    static const std::vector<std::string> kDepthNames = {"row", "col", "inner"};
    std::vector<int> open_for;  // brace depths of enclosing for-bodies
    int brace = 0;
    std::vector<std::string> bounds;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k].punct("{")) ++brace;
        if (t[k].punct("}")) {
            --brace;
            while (!open_for.empty() && open_for.back() > brace) open_for.pop_back();
        }
        auto hdr = for_header(t, k);
        if (!hdr) continue;
        std::size_t depth = open_for.size();
        std::optional<std::string> counter;
        if (!hdr->init.empty() && t[hdr->init.begin].kind == TokenKind::Identifier) {
            counter = std::string(t[hdr->init.begin].text);
            want(*counter, depth < kDepthNames.size() ? kDepthNames[depth] : "idx" + std::to_string(depth));
        }
        if (counter && hdr->cond.size() == 3 && t[hdr->cond.begin].is(TokenKind::Identifier, *counter) &&
            t[hdr->cond.begin + 2].kind == TokenKind::Identifier) {
            auto op = t[hdr->cond.begin + 1].text;
            if (op == "<" || op == "<=" || op == "!=") bounds.emplace_back(t[hdr->cond.begin + 2].text);
        }
        if (hdr->close + 1 < t.size() && t[hdr->close + 1].punct("{")) open_for.push_back(brace + 1);
    }
    for (std::size_t i = 0; i < bounds.size(); ++i) want(bounds[i], i == 0 ? "size" : "size" + std::to_string(i + 1));

    // R3: variables assigned from a named call.
    static const std::map<std::string_view, std::string_view> kResultNames = {
        {"strlen", "len"},          {"wcslen", "len"},          {"malloc", "buffer"},       {"calloc", "buffer"},
        {"realloc", "buffer"},      {"atoi", "parsed_value"},   {"atol", "parsed_value"},   {"strtol", "parsed_value"},
        {"strtoul", "parsed_value"}, {"fopen", "file"},          {"getenv", "env_value"},    {"fgets", "line"},
        {"recv", "bytes_received"}, {"socket", "sock"},         {"popen", "pipe"},          {"rand", "random_value"},
        {"time", "now"}};
    for (std::size_t k = 0; k + 3 < t.size(); ++k) {
        if (t[k].kind != TokenKind::Identifier || !t[k + 1].punct("=")) continue;
        Range rhs = strip_arg(t, {k + 2, statement_end(t, k + 2)});
        if (rhs.size() < 2 || t[rhs.begin].kind != TokenKind::Identifier || !t[rhs.begin + 1].punct("(")) continue;
        std::string callee(t[rhs.begin].text);
        if (is_generic_name(callee)) continue;
        auto it = kResultNames.find(callee);
        want(std::string(t[k].text), it != kResultNames.end() ? std::string(it->second) : callee + "_result");
    }

    // R4: argument roles of well-known calls.
    static const std::unordered_set<std::string_view> kDestFirst = {"strcpy",  "strcat",  "strncpy", "memcpy", "memmove",
                                                                    "sprintf", "snprintf", "gets",    "fgets",  "memset",
                                                                    "wcscpy",  "strncat"};
    static const std::unordered_set<std::string_view> kSrcSecond = {"strcpy", "strcat", "strncpy", "memcpy",
                                                                    "memmove", "wcscpy", "strncat"};
    for (const auto& c : calls) {
        auto arg = [&](std::size_t i) { return i < c.args.size() ? single_ident(t, c.args[i]) : std::nullopt; };
        if (kDestFirst.contains(c.callee)) {
            if (auto a = arg(0)) want(*a, "dest_buf");
        }
        if (kSrcSecond.contains(c.callee)) {
            if (auto a = arg(1)) want(*a, "src_buf");
        }
        if ((c.callee == "memcpy" || c.callee == "memmove" || c.callee == "strncpy") && arg(2)) want(*arg(2), "copy_len");
        if (kCommandCalls.contains(c.callee)) {
            if (auto a = arg(0)) want(*a, "command");
        }
        if (auto it = kFormatArg.find(c.callee); it != kFormatArg.end()) {
            if (auto a = arg(it->second)) want(*a, "format_str");
        }
        if (c.callee == "free") {
            if (auto a = arg(0)) want(*a, "freed_ptr");
        }
        if (c.callee == "fgets") {
            if (auto a = arg(2)) want(*a, "stream");
        }
    }

    // R5/R6: parameters, pointer-like first.
    static const std::regex param_re(R"(^param_([0-9]+)$)");
    for (std::size_t k = 0; k < t.size(); ++k) {
        std::string s(t[k].text);
        std::smatch m;
        if (t[k].kind != TokenKind::Identifier || !std::regex_match(s, m, param_re)) continue;
        bool pointer = (k + 1 < t.size() && (t[k + 1].punct("+") || t[k + 1].punct("["))) ||
                       (k > 0 && t[k - 1].punct(")") && k > 1 && t[k - 2].punct("*"));
        if (pointer) want(s, "data_ptr" + m[1].str());
    }
    for (std::size_t k = 0; k < t.size(); ++k) {
        std::string s(t[k].text);
        std::smatch m;
        if (t[k].kind == TokenKind::Identifier && std::regex_match(s, m, param_re)) want(s, "arg" + m[1].str());
    }

    // R7: the function's own placeholder name.
    if (auto self = own_name(t); self && self->starts_with("FUN_")) {
        std::string hex = self->substr(4);
        auto callees = called_functions(code);
        std::erase_if(callees, [](const std::string& c) { return is_generic_name(c); });
        want(*self, callees.empty() ? "func_" + hex : callees.front() + "_caller_" + hex);
    }

    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> taken = used;
    for (const auto& old : order) {
        auto it = wish.find(old);
        if (it == wish.end()) continue;
        std::string name = it->second;
        for (int n = 2; taken.contains(name) || lang::is_keyword(name); ++n) name = it->second + "_" + std::to_string(n);
        taken.insert(name);
        out.emplace_back(old, name);
    }
    return out;
}

std::vector<std::string> propose_structs(std::string_view code) {
    auto t = lang::code_tokens(code, lang::LexMode::Lenient);
    // base -> offset -> field type
    std::map<std::string, std::map<std::uint64_t, std::string>> access;
    std::vector<std::string> base_order;
    for (std::size_t k = 0; k + 3 < t.size(); ++k) {
        if (!t[k].punct("*") || !t[k + 1].punct("(")) continue;
        std::size_t cast_close = matching(t, k + 1);
        if (cast_close >= t.size() || cast_close < k + 4 || !t[cast_close - 1].punct("*")) continue;
        bool cast = true;
        for (std::size_t i = k + 2; i < cast_close; ++i) cast = cast && type_token(t[i]);
        if (!cast || cast_close + 1 >= t.size()) continue;
        std::string type;
        for (std::size_t i = k + 2; i + 1 < cast_close; ++i) {
            if (!type.empty() && !t[i].punct("*")) type += ' ';
            type += t[i].text;
        }
        std::optional<std::string> base;
        std::uint64_t offset = 0;
        const Token& next = t[cast_close + 1];
        if (next.kind == TokenKind::Identifier) {
            base = std::string(next.text);
        } else if (next.punct("(") && cast_close + 5 < t.size() && t[cast_close + 2].kind == TokenKind::Identifier &&
                   t[cast_close + 3].punct("+") && t[cast_close + 4].kind == TokenKind::Number &&
                   t[cast_close + 5].punct(")")) {
            base = std::string(t[cast_close + 2].text);
            try {
                offset = std::stoull(std::string(t[cast_close + 4].text), nullptr, 0);
            } catch (...) {
                continue;
            }
        }
        if (!base) continue;
        if (!access.contains(*base)) base_order.push_back(*base);
        access[*base].emplace(offset, type);
    }
    std::set<std::string> idents;
    for (const auto& tok : t) {
        if (tok.kind == TokenKind::Identifier) idents.emplace(tok.text);
    }
    std::vector<std::string> out;
    for (const auto& base : base_order) {
        const auto& fields = access[base];
        if (fields.size() < 2) continue;
        std::string tag = "recovered_" + base;
        while (idents.contains(tag)) tag += "_t";
        std::string def = "struct " + tag + " {\n";
        for (const auto& [off, type] : fields) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "field_0x%llx", static_cast<unsigned long long>(off));
            def += "    " + type + " " + buf + ";\n";
        }
        def += "};";
        out.push_back(std::move(def));
    }
    return out;
}

}  // namespace vulbin::llm::mock_rules
