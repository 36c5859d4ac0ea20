#include "vulbin/common/text.hpp"
#include "vulbin/lang/lexer.hpp"
#include "vulbin/prominence/enhancer.hpp"

#include <json.hpp>

#include <algorithm>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace vulbin::prominence {

using decomp::RawFunction;
using lang::Token;
using lang::TokenKind;

namespace {

const std::regex kPlaceholderFunction(R"(^FUN_[0-9a-fA-F]+$)");

bool placeholder_function(std::string_view name) {
    return std::regex_match(name.begin(), name.end(), kPlaceholderFunction);
}

std::set<std::string> identifiers(const std::vector<Token>& tokens) {
    std::set<std::string> out;
    for (const auto& t : tokens) {
        if (t.kind == TokenKind::Identifier) out.emplace(t.text);
    }
    return out;
}

std::string leading_space(std::string_view line) {
    std::size_t n = 0;
    while (n < line.size() && (line[n] == ' ' || line[n] == '\t')) ++n;
    return std::string(line.substr(0, n));
}

std::string comment_line(const std::string& indent, const VulnComment& c) {
    if (c.cwe_hint) return indent + "/* VULN(" + *c.cwe_hint + "): " + c.text + " */\n";
    return indent + "/* NOTE: " + c.text + " */\n";
}

using Stream = std::vector<std::pair<TokenKind, std::string_view>>;

Stream stream_of(const std::vector<Token>& tokens, std::size_t from = 0) {
    Stream s;
    s.reserve(tokens.size() - std::min(from, tokens.size()));
    for (std::size_t i = from; i < tokens.size(); ++i) s.emplace_back(tokens[i].kind, tokens[i].text);
    return s;
}

const std::unordered_set<std::string_view> kTypeKeywords = {
    "int",   "char",   "unsigned", "signed", "long",  "short", "float", "double", "void",
    "const", "volatile", "struct", "union",  "enum",  "_Bool", "bool"};

}  // namespace

std::string_view to_string(Action action) {
    switch (action) {
    case Action::RenameVariables: return "RenameVariables";
    case Action::RecoverStructs: return "RecoverStructs";
    case Action::AnnotateVulnerabilities: return "AnnotateVulnerabilities";
    }
    return "?";
}

std::optional<Action> parse_action(std::string_view word) {
    auto w = text::to_lower(word);
    if (w == "rename" || w == "renamevariables") return Action::RenameVariables;
    if (w == "structs" || w == "recoverstructs") return Action::RecoverStructs;
    if (w == "annotate" || w == "annotatevulnerabilities") return Action::AnnotateVulnerabilities;
    return std::nullopt;
}

bool OptimizationPlan::contains(Action a) const { return std::find(actions.begin(), actions.end(), a) != actions.end(); }

void OptimizationPlan::canonicalize() {
    std::sort(actions.begin(), actions.end());
    actions.erase(std::unique(actions.begin(), actions.end()), actions.end());
}

OptimizationPlan OptimizationPlan::full(std::string rationale) {
    return {{Action::RenameVariables, Action::RecoverStructs, Action::AnnotateVulnerabilities}, std::move(rationale)};
}

std::string apply_renames(std::string_view code, const RenameMap& renames) {
    if (renames.empty()) return std::string(code);
    auto tokens = lang::tokenize(code, lang::LexMode::Lenient);
    std::string out;
    out.reserve(code.size() + code.size() / 8);
    std::size_t pos = 0;
    for (const auto& t : tokens) {
        if (t.kind != TokenKind::Identifier) continue;
        auto it = renames.find(std::string(t.text));
        if (it == renames.end()) continue;
        out.append(code.substr(pos, t.offset - pos));
        out.append(it->second);
        pos = t.offset + t.text.size();
    }
    out.append(code.substr(pos));
    return out;
}

RenameMap sanitize_renames(std::string_view code, const std::vector<std::pair<std::string, std::string>>& proposals,
                           std::string_view own_name, std::vector<std::string>* warnings) {
    auto tokens = lang::code_tokens(code, lang::LexMode::Lenient);
    auto present = identifiers(tokens);
    std::set<std::string> called;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        if (tokens[i].kind == TokenKind::Identifier && tokens[i + 1].punct("(")) called.emplace(tokens[i].text);
    }
    auto reject = [&](const std::string& from, const std::string& to, std::string_view why) {
        if (warnings) warnings->push_back("InvalidMap: " + from + " -> " + to + " dropped (" + std::string(why) + ")");
    };
    RenameMap out;
    std::set<std::string> targets;
    for (const auto& [from, to] : proposals) {
        if (from == to) continue;
        if (!present.contains(from)) reject(from, to, "not an identifier of this function");
        else if (!lang::is_identifier(to)) reject(from, to, "not a valid identifier");
        else if (out.contains(from)) reject(from, to, "duplicate key");
        else if (present.contains(to)) reject(from, to, "collides with an existing identifier");
        else if (targets.contains(to)) reject(from, to, "target already used");
        else if (from != own_name && (placeholder_function(from) || called.contains(from)))
            reject(from, to, "function names are renamed only by their own definition");
        else {
            out.emplace(from, to);
            targets.insert(to);
        }
    }
    return out;
}

bool valid_struct_definition(std::string_view def) {
    std::vector<Token> t;
    try {
        t = lang::code_tokens(def, lang::LexMode::Strict);
    } catch (const Error&) {
        return false;
    }
    if (t.size() < 7 || !t[0].is(TokenKind::Keyword, "struct") || t[1].kind != TokenKind::Identifier ||
        !t[2].punct("{") || !t[t.size() - 2].punct("}") || !t.back().punct(";")) {
        return false;
    }
    std::size_t i = 3;
    const std::size_t end = t.size() - 2;
    int fields = 0;
    while (i < end) {
        std::size_t start = i;
        while (i < end && (t[i].kind == TokenKind::Identifier || t[i].punct("*") ||
                           (t[i].kind == TokenKind::Keyword && kTypeKeywords.contains(t[i].text)))) {
            ++i;
        }
        // At least a type and a name, the name being an identifier.
        if (i - start < 2 || t[i - 1].kind != TokenKind::Identifier || t[start].punct("*")) return false;
        if (i < end && t[i].punct("[")) {
            if (i + 2 >= end || t[i + 1].kind != TokenKind::Number || !t[i + 2].punct("]")) return false;
            i += 3;
        }
        if (i >= end || !t[i].punct(";")) return false;
        ++i;
        ++fields;
    }
    return fields > 0;
}

std::string render(std::string_view raw_code, const RenameMap& renames, const std::vector<std::string>& struct_defs,
                   const std::vector<VulnComment>& comments) {
    std::string body = apply_renames(raw_code, renames);
    std::string out;
    for (const auto& def : struct_defs) out += def + "\n";
    if (comments.empty()) return out + body;

    std::vector<VulnComment> sorted = comments;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const VulnComment& a, const VulnComment& b) { return a.line_no < b.line_no; });
    auto next = sorted.begin();
    std::size_t pos = 0;
    int line = 1;
    while (pos < body.size()) {
        std::size_t eol = body.find('\n', pos);
        std::size_t end = eol == std::string::npos ? body.size() : eol + 1;
        std::string_view text_line(body.data() + pos, end - pos);
        for (; next != sorted.end() && next->line_no == line; ++next) out += comment_line(leading_space(text_line), *next);
        out.append(text_line);
        pos = end;
        ++line;
    }
    return out;
}

bool validate_preservation(const RawFunction& raw, const EnhancedFunction& enhanced) {
    try {
        auto raw_tokens = lang::code_tokens(raw.pseudo_code, lang::LexMode::Strict);
        auto enh_tokens = lang::code_tokens(enhanced.code, lang::LexMode::Strict);

        std::string preamble;
        for (const auto& def : enhanced.struct_defs) preamble += def + "\n";
        auto pre_tokens = lang::code_tokens(preamble, lang::LexMode::Strict);
        if (enh_tokens.size() < pre_tokens.size()) return false;
        for (std::size_t i = 0; i < pre_tokens.size(); ++i) {
            if (enh_tokens[i].kind != pre_tokens[i].kind || enh_tokens[i].text != pre_tokens[i].text) return false;
        }

        auto raw_ids = identifiers(raw_tokens);
        std::unordered_map<std::string_view, std::string_view> inverse;
        for (const auto& [from, to] : enhanced.rename_map) {
            if (!lang::is_identifier(from) || !lang::is_identifier(to)) return false;
            if (raw_ids.contains(to)) return false;
            if (!inverse.emplace(to, from).second) return false;  // not injective
        }

        Stream body = stream_of(enh_tokens, pre_tokens.size());
        for (auto& [kind, word] : body) {
            if (kind != TokenKind::Identifier) continue;
            if (enhanced.rename_map.contains(std::string(word))) return false;  // old name survived
            if (auto it = inverse.find(word); it != inverse.end()) word = it->second;
        }
        if (body != stream_of(raw_tokens)) return false;

        const auto lines = static_cast<int>(text::split_lines(raw.pseudo_code).size());
        for (const auto& c : enhanced.vuln_comments) {
            if (c.line_no < 1 || c.line_no > lines) return false;
        }
        return true;
    } catch (const Error&) {
        return false;
    }
}

EnhancedFunction compose(const RawFunction& raw, const OptimizationPlan& plan, RenameMap renames,
                         std::vector<std::string> struct_defs, std::vector<VulnComment> comments) {
    EnhancedFunction out;
    out.function_id = raw.function_id;
    out.provenance = plan;
    out.provenance.canonicalize();
    out.code = render(raw.pseudo_code, renames, struct_defs, comments);
    out.rename_map = std::move(renames);
    out.struct_defs = std::move(struct_defs);
    out.vuln_comments = std::move(comments);
    if (!validate_preservation(raw, out)) {
        throw Error(ErrorCode::PreservationViolation, "rewrite of " + raw.function_id + " changes the token stream");
    }
    return out;
}

void unify_function_names(const std::vector<RawFunction>& raws, std::vector<EnhancedFunction>& enhanced) {
    std::unordered_map<std::string, const RawFunction*> by_id;
    for (const auto& r : raws) by_id.emplace(r.function_id, &r);

    auto recompose = [&](EnhancedFunction& e, const RawFunction& raw, RenameMap map) {
        try {
            auto next = compose(raw, e.provenance, std::move(map), e.struct_defs, e.vuln_comments);
            next.warnings = std::move(e.warnings);
            e = std::move(next);
            return true;
        } catch (const Error& err) {
            e.warnings.push_back(std::string("function names: ") + err.what());
            return false;
        }
    };

    // Own-name proposals, first come in address order.
    std::map<std::string, std::string> registry;
    std::set<std::string> used;
    std::vector<std::size_t> order(enhanced.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto address = [&](std::size_t i) {
        auto it = by_id.find(enhanced[i].function_id);
        return it == by_id.end() ? UINT64_MAX : it->second->entry_address;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return address(a) < address(b); });
    for (std::size_t i : order) {
        auto& e = enhanced[i];
        auto it = by_id.find(e.function_id);
        if (it == by_id.end() || e.rejected) continue;
        const auto& own = it->second->synthetic_name;
        auto r = e.rename_map.find(own);
        if (r == e.rename_map.end()) continue;
        if (used.insert(r->second).second) {
            registry.emplace(own, r->second);
            continue;
        }
        auto map = e.rename_map;
        e.warnings.push_back("function names: " + r->second + " already names another function; keeping " + own);
        map.erase(own);
        recompose(e, *it->second, std::move(map));
    }

    for (std::size_t i : order) {
        auto& e = enhanced[i];
        auto it = by_id.find(e.function_id);
        if (it == by_id.end() || e.rejected) continue;
        const auto& raw = *it->second;
        auto tokens = lang::code_tokens(raw.pseudo_code, lang::LexMode::Lenient);
        auto present = identifiers(tokens);
        auto map = e.rename_map;
        std::set<std::string> targets;
        for (const auto& [from, to] : map) targets.insert(to);
        bool changed = false;
        for (const auto& name : present) {
            auto reg = registry.find(name);
            if (reg == registry.end() || map.contains(name)) continue;
            if (present.contains(reg->second) || targets.contains(reg->second)) {
                e.warnings.push_back("function names: " + reg->second + " collides in this function; keeping " + name);
                continue;
            }
            map.emplace(name, reg->second);
            targets.insert(reg->second);
            changed = true;
        }
        if (changed) recompose(e, raw, std::move(map));
    }
}

std::string meta_json(const EnhancedFunction& fn) {
    nlohmann::json j;
    j["function_id"] = fn.function_id;
    j["rename_map"] = fn.rename_map;
    j["struct_defs"] = fn.struct_defs;
    auto comments = nlohmann::json::array();
    for (const auto& c : fn.vuln_comments) {
        comments.push_back({{"line_no", c.line_no},
                            {"text", c.text},
                            {"cwe_hint", c.cwe_hint ? nlohmann::json(*c.cwe_hint) : nlohmann::json(nullptr)}});
    }
    j["vuln_comments"] = comments;
    auto actions = nlohmann::json::array();
    for (auto a : fn.provenance.actions) actions.push_back(to_string(a));
    j["plan"] = {{"actions", actions}, {"rationale", fn.provenance.rationale}, {"rejected", fn.rejected}};
    j["warnings"] = fn.warnings;
    return j.dump(2) + "\n";
}

void save_enhanced(const std::filesystem::path& output_dir, const EnhancedFunction& fn) {
    auto dir = output_dir / "enhanced";
    text::write_file(dir / (fn.function_id + ".c"), fn.code);
    text::write_file(dir / (fn.function_id + ".meta.json"), meta_json(fn));
}

}  // namespace vulbin::prominence
