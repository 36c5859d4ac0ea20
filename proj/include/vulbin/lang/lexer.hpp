#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace vulbin::lang {

enum class TokenKind { Identifier, Keyword, Number, String, Char, Punct, Comment, Directive };

std::string_view to_string(TokenKind kind);

// Tokens view into the source buffer passed to tokenize(); keep it alive.
struct Token {
    TokenKind kind;
    std::string_view text;
    std::size_t offset;  // byte offset into the source
    int line;            // 1-based line of the first byte

    bool is(TokenKind k, std::string_view t) const { return kind == k && text == t; }
    bool punct(std::string_view t) const { return is(TokenKind::Punct, t); }
};

enum class LexMode {
    Strict,   // unterminated literal/comment throws Error{TokenizeError}
    Lenient,  // unterminated constructs run to end of input
};

std::vector<Token> tokenize(std::string_view source, LexMode mode = LexMode::Strict);

// Tokenize and drop comments: the statement-level stream.
std::vector<Token> code_tokens(std::string_view source, LexMode mode = LexMode::Strict);

bool is_keyword(std::string_view word);

// A C identifier that is not a reserved keyword.
bool is_identifier(std::string_view word);

// True when '{' '}' '(' ')' '[' ']' nest properly in the comment-free stream.
bool balanced(const std::vector<Token>& tokens);

// Stream equality on (kind, text) pairs; whitespace never participates.
bool same_stream(const std::vector<Token>& a, const std::vector<Token>& b);

// Renders tokens separated by single spaces (newline before each new line).
std::string render(const std::vector<Token>& tokens);

}  // namespace vulbin::lang
