#include "doctest.h"

#include "psdeob/obfuscator.hpp"
#include "psdeob/psmodel.hpp"
#include "psdeob/text.hpp"

#include <random>

using namespace psdeob;

TEST_CASE("sha256 matches published test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const ScriptText s = ScriptText::from_text("abc", "x");
    CHECK(s.sha256 == sha256_hex("abc"));
    CHECK(s.derive("other").source_id == "x");
}

TEST_CASE("ingest_bytes reads UTF-16 with and without a BOM") {
    const std::string utf16 = text::utf8_to_utf16le("Write-Host hi");
    CHECK(ingest_bytes(utf16, "a").content == "Write-Host hi");
    CHECK(ingest_bytes("\xFF\xFE" + utf16, "b").content == "Write-Host hi");
    CHECK(ingest_bytes(std::string("\xFE\xFF\0A", 4), "c").content == "A");

    const ScriptText bad = ingest_bytes("ok \xC3(", "d");
    CHECK(bad.content == "ok \xEF\xBF\xBD(");
    CHECK_FALSE(bad.notes.empty());
    CHECK(bad.sha256 == sha256_hex("ok \xC3("));
}

TEST_CASE("tokenizer classifies the common token kinds") {
    const auto toks = tokenize(std::string_view("$a = 'x' + \"y$b\"; Start-Process -f 1 | iex # c"));
    std::vector<TokenKind> kinds;
    for (const auto& t : toks) {
        if (!t.is_trivia()) kinds.push_back(t.kind);
    }
    const std::vector<TokenKind> want{TokenKind::Variable,          TokenKind::Operator,    TokenKind::StringLiteralSingle,
                                      TokenKind::Operator,          TokenKind::StringLiteralDouble, TokenKind::Semicolon,
                                      TokenKind::CmdletName,        TokenKind::FormatOperator, TokenKind::Number,
                                      TokenKind::Pipe,              TokenKind::Word};
    CHECK(kinds == want);
    CHECK(toks.back().is(TokenKind::Comment));
    const auto dq = std::find_if(toks.begin(), toks.end(), [](const Token& t) { return t.is(TokenKind::StringLiteralDouble); });
    REQUIRE(dq != toks.end());
    CHECK(dq->embedded_vars == std::vector<std::string>{"b"});
}

TEST_CASE("tokenizer rejects unterminated strings") {
    CHECK_THROWS_AS(tokenize(std::string_view("'abc")), TokenizeError);
    CHECK_THROWS_AS(tokenize(std::string_view("\"abc")), TokenizeError);
    CHECK_THROWS_AS(tokenize(std::string_view("<# open")), TokenizeError);
}

TEST_CASE("property: tokens concatenate back to the input") {
    std::mt19937_64 rng(5);
    const auto names = template_names();
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        std::mt19937_64 r(seed);
        const CleanSample clean = clean_template(seed % names.size(), r);
        ScriptText s = clean.script;
        try {
            s = obfuscate(clean.script, kAllTechniques[seed % std::size(kAllTechniques)], seed);
        } catch (const NotApplicable&) {
        }
        std::string joined;
        std::size_t pos = 0;
        for (const auto& t : tokenize(s)) {
            CHECK(t.span.start == pos);
            pos = t.span.end;
            joined += t.text;
        }
        CHECK(joined == s.content);
    }
}

TEST_CASE("literal values and quoting") {
    const auto lit = [](std::string_view src) { return literal_value(tokenize(src).front()); };
    CHECK(lit("'it''s'") == "it's");
    CHECK(lit("\"a`tb\"") == "a\tb");
    CHECK(lit("\"x$y\"") == std::nullopt);
    CHECK(single_quoted("it's") == "'it''s'");
    CHECK(double_quoted_or_single("plain") == "\"plain\"");
    CHECK(double_quoted_or_single("a$b") == "'a$b'");
    for (std::string v : {"", "a'b", "x\"y", "$env:TEMP", "tab\there"}) {
        CHECK(lit(single_quoted(v)) == v);
        CHECK(lit(double_quoted_or_single(v)) == v);
    }
}

TEST_CASE("cmdlet table lookups are case-insensitive and canonical") {
    CHECK(canonical_cmdlet("nEW-oBjECt") == std::optional<std::string_view>("New-Object"));
    CHECK(canonical_cmdlet("invoke-expression") == std::optional<std::string_view>("Invoke-Expression"));
    CHECK_FALSE(canonical_cmdlet("Not-ACmdlet").has_value());
    const auto all = all_cmdlets();
    CHECK(all.size() == canonical_cmdlet_count());
    CHECK(std::is_sorted(all.begin(), all.end(), [](auto a, auto b) { return to_lower(a) < to_lower(b); }));
}

TEST_CASE("token equivalence ignores whitespace and keyword case only") {
    CHECK(token_equivalent("Start-Process   'a'", "start-process 'a'"));
    CHECK_FALSE(token_equivalent("Start-Process 'a'", "Start-Process 'A'"));
    CHECK_FALSE(token_equivalent("Start-Process 'a'", "Start-Process ('a')"));
}

TEST_CASE("technique names round-trip") {
    for (auto t : kAllTechniques) {
        CHECK(technique_from_string(to_string(t)) == t);
    }
    CHECK(describe(LayerType::compressed(LayerType::Compression::Gzip)) == "Compressed/Gzip");
    CHECK(describe(LayerType::encoded(LayerType::Encoding::Base64)) == "Encoded/Base64");
    CHECK(describe(LayerType::string_based()) == "StringBased");
    CHECK(describe(LayerType::clean()) == "Clean");
}

TEST_CASE("text helpers") {
    const std::string s = "Grüße, мир";
    CHECK(text::utf16_to_utf8(text::utf8_to_utf16le(s)) == s);
    CHECK(text::has_alternating_nul(text::utf8_to_utf16le("hello world")));
    CHECK_FALSE(text::has_alternating_nul("hello world"));
    CHECK(text::printable_ratio("") == 0.0);
    CHECK(text::printable_ratio("abc") == 1.0);
    CHECK(text::excerpt("äöü", 2) == "äö");
    std::size_t replaced = 0;
    CHECK(text::sanitize_utf8("\xFF", &replaced) == "\xEF\xBF\xBD");
    CHECK(replaced == 1);
}
