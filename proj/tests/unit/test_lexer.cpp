#include "support.hpp"

#include "vulbin/lang/lexer.hpp"

#include <random>

using namespace vulbin;
using lang::TokenKind;

TEST_CASE("token kinds of a Ghidra-style statement") {
    std::string src = "iVar1 = strlen((char *)param_1) + 0x10; // trailing\n";
    auto t = lang::tokenize(src);
    REQUIRE(t.size() == 14);
    CHECK(t[0].kind == TokenKind::Identifier);
    CHECK(t[1].punct("="));
    CHECK(t[2].text == "strlen");
    CHECK(t[4].punct("("));
    CHECK(t[5].kind == TokenKind::Keyword);
    CHECK(t[11].kind == TokenKind::Number);
    CHECK(t[11].text == "0x10");
    CHECK(t[13].kind == TokenKind::Comment);
    CHECK(lang::code_tokens(src).size() == 13);
}

TEST_CASE("strings, chars and escapes are single tokens") {
    auto t = lang::tokenize(R"(puts("a \"b\" // c"); x = '\'';)");
    REQUIRE(t.size() == 9);
    CHECK(t[2].kind == TokenKind::String);
    CHECK(t[2].text == R"("a \"b\" // c")");
    CHECK(t[7].kind == TokenKind::Char);
}

TEST_CASE("comments and directives") {
    auto t = lang::tokenize("#include <stdio.h>\n/* block\n comment */ int x;\n");
    REQUIRE(t.size() == 5);
    CHECK(t[0].kind == TokenKind::Directive);
    CHECK(t[1].kind == TokenKind::Comment);
    CHECK(t[2].line == 3);
}

TEST_CASE("multi-character operators") {
    auto t = lang::code_tokens("a->b <<= c >> 2; d != e && f || ++g;");
    std::vector<std::string> texts;
    for (auto& tok : t) texts.emplace_back(tok.text);
    CHECK(texts == std::vector<std::string>{"a", "->", "b", "<<=", "c", ">>", "2", ";", "d", "!=", "e", "&&", "f", "||",
                                            "++", "g", ";"});
}

TEST_CASE("unterminated constructs") {
    CHECK_ERROR_CODE(lang::tokenize("x = \"open"), ErrorCode::TokenizeError);
    CHECK_ERROR_CODE(lang::tokenize("/* never closed"), ErrorCode::TokenizeError);
    CHECK(lang::tokenize("x = \"open", lang::LexMode::Lenient).size() == 3);
}

TEST_CASE("identifiers and keywords") {
    CHECK(lang::is_identifier("param_1"));
    CHECK(lang::is_identifier("_x9"));
    CHECK_FALSE(lang::is_identifier("9x"));
    CHECK_FALSE(lang::is_identifier("while"));
    CHECK_FALSE(lang::is_identifier(""));
    CHECK_FALSE(lang::is_identifier("a-b"));
    CHECK(lang::is_keyword("return"));
}

TEST_CASE("balance check") {
    CHECK(lang::balanced(lang::code_tokens("f(a[1]) { }")));
    CHECK_FALSE(lang::balanced(lang::code_tokens("f(a[1)]")));
    CHECK_FALSE(lang::balanced(lang::code_tokens("{ {")));
}

TEST_CASE("stream equality ignores whitespace and comments only through code_tokens") {
    auto a = lang::code_tokens("int  x=1;\n");
    auto b = lang::code_tokens("int x = 1 ; /* c */");
    CHECK(lang::same_stream(a, b));
    auto c = lang::code_tokens("int x = 10;");
    CHECK_FALSE(lang::same_stream(a, c));
}

TEST_CASE("render then re-tokenize is the identity on random streams") {
    std::mt19937 rng(7);
    const char* pieces[] = {"a", "b1", "0x10", "\"s\"", "'c'", "+", "->", "(", ")", "{", "}", ";", "if", "return", "<<"};
    for (int round = 0; round < 200; ++round) {
        std::string src;
        int n = 1 + static_cast<int>(rng() % 30);
        for (int i = 0; i < n; ++i) {
            src += pieces[rng() % std::size(pieces)];
            src += (rng() % 5 == 0) ? "\n" : " ";
        }
        auto t = lang::code_tokens(src);
        auto again = lang::render(t);
        CHECK(lang::same_stream(t, lang::code_tokens(again)));
    }
}
