#include "vulbin/lang/lexer.hpp"

#include "vulbin/common/error.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

namespace vulbin::lang {

namespace {

const std::unordered_set<std::string_view>& keywords() {
    static const std::unordered_set<std::string_view> kw = {
        "auto",     "break",    "case",      "char",     "const",    "continue", "default",  "do",
        "double",   "else",     "enum",      "extern",   "float",    "for",      "goto",     "if",
        "inline",   "int",      "long",      "register", "restrict", "return",   "short",    "signed",
        "sizeof",   "static",   "struct",    "switch",   "typedef",  "union",    "unsigned", "void",
        "volatile", "while",    "_Bool",     "_Complex", "_Imaginary", "_Alignas", "_Alignof", "_Atomic",
        "_Noreturn", "_Static_assert", "_Thread_local", "bool", "true", "false", "class", "namespace",
        "new",      "delete",   "this",      "template", "typename", "operator", "nullptr", "virtual",
    };
    return kw;
}

constexpr std::array<std::string_view, 24> kMultiPunct = {
    ">>=", "<<=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&",  "||",  "+=",  "-=", "*=", "/=", "%=", "&=", "|=", "^=", "::", "##",
};

bool ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c == '$' || c >= 0x80; }
bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80; }

class Lexer {
public:
    Lexer(std::string_view src, LexMode mode) : src_(src), mode_(mode) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        bool line_start = true;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '\n') {
                ++line_;
                ++pos_;
                line_start = true;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
                continue;
            }
            std::size_t start = pos_;
            int line = line_;
            TokenKind kind;
            if (c == '#' && line_start) {
                kind = TokenKind::Directive;
                skip_to_eol();
            } else if (c == '/' && peek(1) == '/') {
                kind = TokenKind::Comment;
                skip_to_eol();
            } else if (c == '/' && peek(1) == '*') {
                kind = TokenKind::Comment;
                block_comment();
            } else if (c == '"' || c == '\'') {
                kind = c == '"' ? TokenKind::String : TokenKind::Char;
                quoted(c);
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
                kind = TokenKind::Number;
                number();
            } else if (ident_start(static_cast<unsigned char>(c))) {
                while (pos_ < src_.size() && ident_char(static_cast<unsigned char>(src_[pos_]))) ++pos_;
                auto word = src_.substr(start, pos_ - start);
                char q = pos_ < src_.size() ? src_[pos_] : '\0';
                if ((q == '"' || q == '\'') && (word == "L" || word == "u" || word == "U" || word == "u8")) {
                    kind = q == '"' ? TokenKind::String : TokenKind::Char;
                    quoted(q);
                } else {
                    kind = keywords().contains(word) ? TokenKind::Keyword : TokenKind::Identifier;
                }
            } else {
                kind = TokenKind::Punct;
                punct();
            }
            out.push_back({kind, src_.substr(start, pos_ - start), start, line});
            line_start = false;
        }
        return out;
    }

private:
    char peek(std::size_t ahead) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }

    void advance() {
        if (src_[pos_] == '\n') ++line_;
        ++pos_;
    }

    [[noreturn]] void fail(const char* what) const {
        throw Error(ErrorCode::TokenizeError, std::string(what) + " at line " + std::to_string(line_));
    }

    // Line comments and directives end at a newline not preceded by a backslash.
    void skip_to_eol() {
        while (pos_ < src_.size() && src_[pos_] != '\n') {
            if (src_[pos_] == '\\' && peek(1) == '\n') advance();
            advance();
        }
    }

    void block_comment() {
        pos_ += 2;
        while (pos_ < src_.size()) {
            if (src_[pos_] == '*' && peek(1) == '/') {
                pos_ += 2;
                return;
            }
            advance();
        }
        if (mode_ == LexMode::Strict) fail("unterminated block comment");
    }

    void quoted(char quote) {
        ++pos_;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '\\') {
                advance();
                if (pos_ < src_.size()) advance();
                continue;
            }
            if (c == quote) {
                ++pos_;
                return;
            }
            if (c == '\n') break;
            advance();
        }
        if (mode_ == LexMode::Strict) fail(quote == '"' ? "unterminated string literal" : "unterminated char literal");
    }

    void number() {
        std::size_t start = pos_;
        bool hex = src_[pos_] == '0' && (peek(1) == 'x' || peek(1) == 'X');
        while (pos_ < src_.size()) {
            unsigned char c = static_cast<unsigned char>(src_[pos_]);
            if ((c == '+' || c == '-') && pos_ > start) {
                char prev = static_cast<char>(std::tolower(static_cast<unsigned char>(src_[pos_ - 1])));
                if ((prev == 'e' && !hex) || (prev == 'p' && hex)) {
                    ++pos_;
                    continue;
                }
                return;
            }
            if (std::isalnum(c) || c == '.' || c == '_') {
                ++pos_;
                continue;
            }
            return;
        }
    }

    void punct() {
        for (auto p : kMultiPunct) {
            if (src_.substr(pos_, p.size()) == p) {
                pos_ += p.size();
                return;
            }
        }
        ++pos_;
    }

    std::string_view src_;
    LexMode mode_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

}  // namespace

std::string_view to_string(TokenKind kind) {
    switch (kind) {
    case TokenKind::Identifier: return "identifier";
    case TokenKind::Keyword: return "keyword";
    case TokenKind::Number: return "number";
    case TokenKind::String: return "string";
    case TokenKind::Char: return "char";
    case TokenKind::Punct: return "punct";
    case TokenKind::Comment: return "comment";
    case TokenKind::Directive: return "directive";
    }
    return "?";
}

std::vector<Token> tokenize(std::string_view source, LexMode mode) { return Lexer(source, mode).run(); }

std::vector<Token> code_tokens(std::string_view source, LexMode mode) {
    auto toks = tokenize(source, mode);
    std::erase_if(toks, [](const Token& t) { return t.kind == TokenKind::Comment; });
    return toks;
}

bool is_keyword(std::string_view word) { return keywords().contains(word); }

bool is_identifier(std::string_view word) {
    if (word.empty() || !ident_start(static_cast<unsigned char>(word[0]))) return false;
    for (unsigned char c : word) {
        if (!(std::isalnum(c) || c == '_')) return false;
    }
    return !is_keyword(word);
}

bool balanced(const std::vector<Token>& tokens) {
    std::vector<char> stack;
    for (const auto& t : tokens) {
        if (t.kind != TokenKind::Punct || t.text.size() != 1) continue;
        char c = t.text[0];
        if (c == '{' || c == '(' || c == '[') {
            stack.push_back(c);
        } else if (c == '}' || c == ')' || c == ']') {
            char open = c == '}' ? '{' : c == ')' ? '(' : '[';
            if (stack.empty() || stack.back() != open) return false;
            stack.pop_back();
        }
    }
    return stack.empty();
}

bool same_stream(const std::vector<Token>& a, const std::vector<Token>& b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end(),
                      [](const Token& x, const Token& y) { return x.kind == y.kind && x.text == y.text; });
}

std::string render(const std::vector<Token>& tokens) {
    std::string out;
    int line = tokens.empty() ? 0 : tokens.front().line;
    for (const auto& t : tokens) {
        if (!out.empty()) out += t.line != line ? '\n' : ' ';
        line = t.line;
        out += t.text;
    }
    return out;
}

}  // namespace vulbin::lang
