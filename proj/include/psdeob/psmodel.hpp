/// @file psmodel.hpp
/// @brief Domain types shared by every analysis stage, plus the tokenizer
/// for the PowerShell subset the analyzer understands.

#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace psdeob {

/// Half-open byte range [start, end) into a script's content.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - start; }
    bool operator==(const Span&) const = default;
};

/// Source text of one script. Content is always valid UTF-8.
struct ScriptText {
    std::string content;
    std::string source_id;
    std::string sha256;  ///< 64 lowercase hex chars
    /// Ingestion notes, e.g. lossy replacement of invalid byte sequences.
    std::vector<std::string> notes;

    /// Wrap already-decoded UTF-8 text; sha256 is taken over @p content.
    static ScriptText from_text(std::string content, std::string source_id = {});

    /// A new script derived from this one (same provenance, new content).
    ScriptText derive(std::string new_content) const;
};

/// Decode raw input bytes into a ScriptText.
///
/// UTF-8 is assumed unless a UTF-16 BOM or an alternating-NUL pattern is
/// present, in which case the bytes are read as UTF-16LE (or BE for a BE
/// BOM). Invalid sequences become U+FFFD and are recorded in `notes`.
/// The digest is computed over the raw bytes.
ScriptText ingest_bytes(std::string_view raw, std::string source_id);

std::string sha256_hex(std::string_view bytes);

enum class TokenKind {
    Variable,
    CmdletName,
    MethodCall,
    StringLiteralSingle,
    StringLiteralDouble,
    Number,
    Operator,
    FormatOperator,
    CallOperator,
    DotSourceOperator,
    Semicolon,
    Pipe,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Backtick,
    Comment,
    Whitespace,
    Newline,
    Word,
};

std::string_view to_string(TokenKind kind);

struct Token {
    TokenKind kind = TokenKind::Word;
    std::string text;
    Span span;
    /// Names (without `$`) referenced inside a double-quoted string,
    /// including `env:NAME` forms and the marker `(` for `$( )` blocks.
    std::vector<std::string> embedded_vars;

    bool is(TokenKind k) const { return kind == k; }
    bool is_op(std::string_view op) const { return kind == TokenKind::Operator && text == op; }
    bool is_string() const {
        return kind == TokenKind::StringLiteralSingle || kind == TokenKind::StringLiteralDouble;
    }
    bool is_word() const { return kind == TokenKind::Word || kind == TokenKind::CmdletName; }
    bool is_trivia() const { return kind == TokenKind::Whitespace || kind == TokenKind::Comment; }
};

/// Raised when the input cannot be split into tokens: an unclosed quote,
/// here-string or block comment.
class TokenizeError : public std::runtime_error {
public:
    TokenizeError(std::string what, std::size_t offset)
        : std::runtime_error(std::move(what)), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Tokens concatenate back to the exact input. Throws TokenizeError on an
/// unterminated string.
std::vector<Token> tokenize(std::string_view content);
std::vector<Token> tokenize(const ScriptText& script);

/// Value of a string-literal token when it contains no interpolation:
/// single-quoted strings always, double-quoted ones only without `$`
/// references or subexpressions. Escapes are resolved.
std::optional<std::string> literal_value(const Token& token);

/// Render @p value as a single-quoted PowerShell literal.
std::string single_quoted(std::string_view value);

/// Render @p value as a double-quoted literal if it needs no escaping,
/// otherwise fall back to single quotes.
std::string double_quoted_or_single(std::string_view value);

/// ASCII case-insensitive comparison.
bool iequals(std::string_view a, std::string_view b);
std::string to_lower(std::string_view s);

/// Obfuscation layer classification for one stage.
struct LayerType {
    enum class Variant { StringBased, Encoded, Compressed, Clean };
    enum class Encoding { Base64, Binary };
    enum class Compression { Deflate, Gzip };

    Variant variant = Variant::Clean;
    std::optional<Encoding> encoding;        ///< present iff Encoded
    std::optional<Compression> compression;  ///< present iff Compressed

    static LayerType clean() { return {}; }
    static LayerType string_based() { return {Variant::StringBased, {}, {}}; }
    static LayerType encoded(Encoding e) { return {Variant::Encoded, e, {}}; }
    static LayerType compressed(Compression c) { return {Variant::Compressed, {}, c}; }

    bool is_clean() const { return variant == Variant::Clean; }
    bool operator==(const LayerType&) const = default;
};

std::string_view to_string(LayerType::Variant v);
std::string_view to_string(LayerType::Encoding e);
std::string_view to_string(LayerType::Compression c);
/// "Encoded/Base64", "Compressed/Deflate", "StringBased", "Clean".
std::string describe(const LayerType& layer);

enum class TechniqueTag {
    Concatenation,
    Reordering,
    Tick,
    Eval,
    UpLowCase,
    WhiteSpaces,
    Base64Encoding,
    BinaryEncoding,
    DeflateCompression,
    GzipCompression,
};

inline constexpr TechniqueTag kAllTechniques[] = {
    TechniqueTag::Concatenation,  TechniqueTag::Reordering,     TechniqueTag::Tick,
    TechniqueTag::Eval,           TechniqueTag::UpLowCase,      TechniqueTag::WhiteSpaces,
    TechniqueTag::Base64Encoding, TechniqueTag::BinaryEncoding, TechniqueTag::DeflateCompression,
    TechniqueTag::GzipCompression,
};

inline constexpr TechniqueTag kStringTechniques[] = {
    TechniqueTag::Concatenation, TechniqueTag::Reordering, TechniqueTag::Tick,
    TechniqueTag::Eval,          TechniqueTag::UpLowCase,  TechniqueTag::WhiteSpaces,
};

std::string_view to_string(TechniqueTag tag);
std::optional<TechniqueTag> technique_from_string(std::string_view name);
bool is_string_technique(TechniqueTag tag);

/// Case-insensitive lookup into the bundled canonical cmdlet table.
/// Returns the canonical spelling if @p name is a known cmdlet.
std::optional<std::string_view> canonical_cmdlet(std::string_view name);
std::size_t canonical_cmdlet_count();
/// Every canonical cmdlet name, sorted case-insensitively.
std::vector<std::string_view> all_cmdlets();

/// True if the two scripts have the same token sequence, ignoring
/// whitespace runs and comparing non-literal tokens case-insensitively.
bool token_equivalent(std::string_view a, std::string_view b);

}  // namespace psdeob
