#include "psdeob/obfuscator.hpp"

#include "psdeob/decoder.hpp"
#include "psdeob/text.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <numeric>

namespace psdeob {

namespace {

using Rng = std::mt19937_64;

std::size_t draw(Rng& rng, std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(rng() % n); }
bool coin(Rng& rng) { return (rng() & 1u) != 0; }

struct Edit {
    Span span;
    std::string text;
};

std::string apply_edits(std::string_view src, std::vector<Edit> edits) {
    std::sort(edits.begin(), edits.end(), [](const Edit& a, const Edit& b) { return a.span.start < b.span.start; });
    std::string out;
    std::size_t pos = 0;
    for (const auto& e : edits) {
        out.append(src.substr(pos, e.span.start - pos));
        out.append(e.text);
        pos = e.span.end;
    }
    out.append(src.substr(pos));
    return out;
}

/// Pick which of @p n candidate sites to rewrite: a random non-empty
/// subset, or just the first one when randomness is off.
std::vector<std::size_t> choose_sites(std::size_t n, Rng& rng, const ObfuscateOptions& opt) {
    std::vector<std::size_t> out;
    if (n == 0) {
        return out;
    }
    if (!opt.randomize) {
        return {0};
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (coin(rng)) out.push_back(i);
    }
    if (out.empty()) {
        out.push_back(draw(rng, n));
    }
    return out;
}

bool is_keyword(std::string_view w) {
    static constexpr std::string_view kKeywords[] = {
        "if",    "elseif", "else",     "while",  "until", "for",  "foreach", "switch", "catch",
        "param", "function", "filter", "trap",   "do",    "try",  "finally", "return", "throw",
        "break", "continue", "exit",   "in",     "begin", "process", "end",  "data",
    };
    return std::any_of(std::begin(kKeywords), std::end(kKeywords), [&](std::string_view k) { return iequals(k, w); });
}

/// Letters that form escape sequences after a backtick.
bool escape_letter(char c) { return std::string_view("0abefnrtuvABEFNRTUV").find(c) != std::string_view::npos; }

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

class Tokens {
public:
    explicit Tokens(const std::string& src) : toks(tokenize(src)) {}

    std::vector<Token> toks;

    /// Index of the previous non-trivia token, or -1.
    long prev_sig(std::size_t i) const {
        long k = static_cast<long>(i) - 1;
        while (k >= 0 && toks[static_cast<std::size_t>(k)].is_trivia()) --k;
        return k;
    }
    const Token* raw(long i) const {
        return i >= 0 && i < static_cast<long>(toks.size()) ? &toks[static_cast<std::size_t>(i)] : nullptr;
    }
};

bool binds_tighter(const Token* t) {
    return t != nullptr && (t->is(TokenKind::MethodCall) || t->is_op("[") || t->is_op(".") || t->is_op("::"));
}

/// True when a string literal at token @p i can be replaced by a
/// parenthesized expression whose parentheses are dropped again once the
/// expression is folded back to a literal.
bool paren_transparent(const Tokens& tk, std::size_t i) {
    if (binds_tighter(tk.raw(static_cast<long>(i) + 1))) {
        return false;
    }
    const Token* before = tk.raw(static_cast<long>(i) - 1);
    if (before == nullptr) {
        return true;
    }
    switch (before->kind) {
        case TokenKind::Newline:
        case TokenKind::LParen:
        case TokenKind::Semicolon:
        case TokenKind::LBrace:
        case TokenKind::Pipe:
            return true;
        case TokenKind::Operator:
            return before->text == "=" || before->text == "," || before->text == "+" || before->text == "+=";
        case TokenKind::Whitespace: {
            const long p = tk.prev_sig(i);
            if (p < 0) {
                return true;
            }
            const Token& sb = tk.toks[static_cast<std::size_t>(p)];
            switch (sb.kind) {
                case TokenKind::Newline:
                case TokenKind::Semicolon:
                case TokenKind::LParen:
                case TokenKind::LBrace:
                case TokenKind::Pipe:
                case TokenKind::FormatOperator:
                    return true;
                case TokenKind::Operator:
                    return !(sb.text == "." || sb.text == "::" || sb.text == "$" || sb.text == "@" || sb.text == "]" ||
                             sb.text == "[");
                case TokenKind::Word:
                case TokenKind::CmdletName:
                    return !is_keyword(sb.text);
                default:
                    return false;
            }
        }
        default:
            return false;
    }
}

struct SplittableLiteral {
    std::size_t index;
    std::string value;
    bool double_quoted;
};

/// String literals whose text is exactly the canonical rendering of their
/// value, so pieces quoted the same way fold back to identical text.
std::vector<SplittableLiteral> splittable_literals(const Tokens& tk) {
    std::vector<SplittableLiteral> out;
    for (std::size_t i = 0; i < tk.toks.size(); ++i) {
        const Token& t = tk.toks[i];
        if (!t.is_string() || t.text.empty() || t.text.front() == '@') {
            continue;
        }
        auto value = literal_value(t);
        if (!value || value->size() < 2 || value->find_first_of("\r\n") != std::string::npos) {
            continue;
        }
        const bool dq = t.is(TokenKind::StringLiteralDouble);
        if (dq ? (t.text.front() != '"' || t.text != double_quoted_or_single(*value))
               : (t.text.front() != '\'' || t.text != single_quoted(*value))) {
            continue;
        }
        if (!paren_transparent(tk, i)) {
            continue;
        }
        out.push_back({i, std::move(*value), dq});
    }
    return out;
}

std::string quote(std::string_view v, bool dq) { return dq ? "\"" + std::string(v) + "\"" : single_quoted(v); }

/// Cut @p value into 2..4 pieces (at character boundaries).
std::vector<std::string> split_value(const std::string& value, Rng& rng, const ObfuscateOptions& opt) {
    std::vector<std::size_t> cuts;
    for (std::size_t k = 1; k < value.size(); ++k) {
        if ((static_cast<unsigned char>(value[k]) & 0xC0) != 0x80) cuts.push_back(k);
    }
    std::vector<std::size_t> chosen;
    if (!opt.randomize) {
        chosen.push_back(cuts[cuts.size() / 2]);
    } else {
        const std::size_t pieces = std::min<std::size_t>(2 + draw(rng, 3), cuts.size() + 1);
        std::shuffle(cuts.begin(), cuts.end(), rng);
        chosen.assign(cuts.begin(), cuts.begin() + static_cast<long>(pieces - 1));
        std::sort(chosen.begin(), chosen.end());
    }
    std::vector<std::string> parts;
    std::size_t from = 0;
    for (auto c : chosen) {
        parts.push_back(value.substr(from, c - from));
        from = c;
    }
    parts.push_back(value.substr(from));
    return parts;
}

bool has_splittable_cut(const std::string& value) {
    for (std::size_t k = 1; k < value.size(); ++k) {
        if ((static_cast<unsigned char>(value[k]) & 0xC0) != 0x80) return true;
    }
    return false;
}

ScriptText concat(const ScriptText& s, Rng& rng, const ObfuscateOptions& opt) {
    const Tokens tk(s.content);
    auto lits = splittable_literals(tk);
    std::erase_if(lits, [](const SplittableLiteral& l) { return !has_splittable_cut(l.value); });
    if (lits.empty()) {
        throw NotApplicable(TechniqueTag::Concatenation, "no string literal that can be split");
    }
    std::vector<Edit> edits;
    for (auto pick : choose_sites(lits.size(), rng, opt)) {
        const auto& l = lits[pick];
        const auto parts = split_value(l.value, rng, opt);
        const std::string_view plus = opt.randomize && coin(rng) ? " + " : "+";
        std::string text = "(";
        for (std::size_t p = 0; p < parts.size(); ++p) {
            if (p > 0) text += plus;
            text += quote(parts[p], l.double_quoted);
        }
        text += ")";
        edits.push_back({tk.toks[l.index].span, std::move(text)});
    }
    return s.derive(apply_edits(s.content, std::move(edits)));
}

ScriptText reorder(const ScriptText& s, Rng& rng, const ObfuscateOptions& opt) {
    const Tokens tk(s.content);
    auto lits = splittable_literals(tk);
    std::erase_if(lits, [](const SplittableLiteral& l) { return !has_splittable_cut(l.value); });
    if (lits.empty()) {
        throw NotApplicable(TechniqueTag::Reordering, "no string literal that can be split");
    }
    std::vector<Edit> edits;
    for (auto pick : choose_sites(lits.size(), rng, opt)) {
        const auto& l = lits[pick];
        const auto parts = split_value(l.value, rng, opt);
        // order[m] = which piece sits at argument position m
        std::vector<std::size_t> order(parts.size());
        std::iota(order.begin(), order.end(), 0);
        if (opt.randomize) {
            while (std::is_sorted(order.begin(), order.end())) std::shuffle(order.begin(), order.end(), rng);
        } else {
            std::reverse(order.begin(), order.end());
        }
        std::vector<std::size_t> slot(parts.size());
        for (std::size_t m = 0; m < order.size(); ++m) slot[order[m]] = m;
        std::string fmt;
        for (auto m : slot) fmt += "{" + std::to_string(m) + "}";
        std::string text = "(" + quote(fmt, l.double_quoted) + " -f ";
        for (std::size_t m = 0; m < order.size(); ++m) {
            if (m > 0) text += ",";
            text += quote(parts[order[m]], l.double_quoted);
        }
        text += ")";
        edits.push_back({tk.toks[l.index].span, std::move(text)});
    }
    return s.derive(apply_edits(s.content, std::move(edits)));
}

/// Bare words a backtick may be placed into without changing meaning.
bool tickable_word(const Tokens& tk, std::size_t i) {
    const Token& t = tk.toks[i];
    if (t.is(TokenKind::CmdletName)) {
        return true;
    }
    if (!t.is(TokenKind::Word) || t.text.size() < 2 || t.text.front() == '-' || is_keyword(t.text)) {
        return false;
    }
    for (char c : t.text) {
        if (!is_alnum(c) && std::string_view("._\\:/").find(c) == std::string_view::npos) return false;
    }
    const Token* b = tk.raw(static_cast<long>(i) - 1);
    const Token* a = tk.raw(static_cast<long>(i) + 1);
    if (b != nullptr && (b->is_op("[") || b->is_op(".") || b->is_op("::") || b->is(TokenKind::Backtick))) {
        return false;
    }
    if (a != nullptr && (a->is_op("]") || a->is_op("::") || a->is_op("=") || a->is(TokenKind::Backtick))) {
        return false;
    }
    return true;
}

ScriptText tick(const ScriptText& s, Rng& rng, const ObfuscateOptions& opt) {
    const Tokens tk(s.content);
    // Candidate insertion offsets, grouped per token.
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < tk.toks.size(); ++i) {
        const Token& t = tk.toks[i];
        std::vector<std::size_t> at;
        if (t.is_word() && tickable_word(tk, i)) {
            for (std::size_t k = 1; k < t.text.size(); ++k) {
                if (is_alnum(t.text[k]) && !escape_letter(t.text[k])) at.push_back(t.span.start + k);
            }
        } else if (t.is(TokenKind::StringLiteralDouble) && !t.text.empty() && t.text.front() == '"' &&
                   t.embedded_vars.empty() && t.text.find('`') == std::string::npos) {
            for (std::size_t k = 1; k + 1 < t.text.size(); ++k) {
                if (is_alnum(t.text[k]) && !escape_letter(t.text[k])) at.push_back(t.span.start + k);
            }
        }
        if (!at.empty()) groups.push_back(std::move(at));
    }
    if (groups.empty()) {
        throw NotApplicable(TechniqueTag::Tick, "no bare word or plain double-quoted string");
    }
    std::vector<Edit> edits;
    for (auto g : choose_sites(groups.size(), rng, opt)) {
        auto& at = groups[g];
        std::size_t n = 1;
        if (opt.randomize) {
            n = std::min<std::size_t>(1 + draw(rng, 3), at.size());
            std::shuffle(at.begin(), at.end(), rng);
        }
        for (std::size_t k = 0; k < n; ++k) edits.push_back({Span{at[k], at[k]}, "`"});
    }
    return s.derive(apply_edits(s.content, std::move(edits)));
}

bool command_position(const Tokens& tk, std::size_t i) {
    const long p = tk.prev_sig(i);
    if (p < 0) {
        return true;
    }
    const Token& t = tk.toks[static_cast<std::size_t>(p)];
    switch (t.kind) {
        case TokenKind::Newline:
        case TokenKind::Semicolon:
        case TokenKind::Pipe:
        case TokenKind::LBrace:
            return true;
        case TokenKind::Operator:
            return t.text == "=";
        case TokenKind::LParen: {
            const Token* b = tk.raw(p - 1);
            return b == nullptr || !(b->is(TokenKind::MethodCall) || b->is_word() || b->is_op("]") ||
                                     b->is_op("::") || b->is_op(".") || b->is(TokenKind::Variable));
        }
        default:
            return false;
    }
}

bool command_name_shape(std::string_view w) {
    if (w.empty() || !(std::isalpha(static_cast<unsigned char>(w[0])) || w[0] == '_')) {
        return false;
    }
    return std::all_of(w.begin(), w.end(), [](char c) { return is_alnum(c) || c == '_' || c == '.' || c == '-'; });
}

ScriptText eval(const ScriptText& s, Rng& rng, const ObfuscateOptions& opt) {
    const Tokens tk(s.content);
    std::vector<std::size_t> sites;
    for (std::size_t i = 0; i < tk.toks.size(); ++i) {
        const Token& t = tk.toks[i];
        if (!t.is_word() || is_keyword(t.text) || !command_name_shape(t.text) || !command_position(tk, i)) {
            continue;
        }
        const Token* a = tk.raw(static_cast<long>(i) + 1);
        if (a != nullptr && !(a->is(TokenKind::Whitespace) || a->is(TokenKind::Newline) ||
                              a->is(TokenKind::Semicolon) || a->is(TokenKind::RParen) ||
                              a->is(TokenKind::RBrace) || a->is(TokenKind::Pipe))) {
            continue;
        }
        sites.push_back(i);
    }
    if (sites.empty()) {
        throw NotApplicable(TechniqueTag::Eval, "no command name in command position");
    }
    std::vector<Edit> edits;
    for (auto pick : choose_sites(sites.size(), rng, opt)) {
        const Token& t = tk.toks[sites[pick]];
        const bool dot = opt.randomize && draw(rng, 4) == 0;
        const bool dq = opt.randomize && coin(rng);
        edits.push_back({t.span, std::string(dot ? "." : "&") + "(" + quote(t.text, dq) + ")"});
    }
    return s.derive(apply_edits(s.content, std::move(edits)));
}

ScriptText upcase(const ScriptText& s, Rng& rng, const ObfuscateOptions& opt) {
    const Tokens tk(s.content);
    std::vector<std::size_t> sites;
    for (std::size_t i = 0; i < tk.toks.size(); ++i) {
        const Token& t = tk.toks[i];
        if (t.is(TokenKind::CmdletName) && canonical_cmdlet(t.text) == t.text) sites.push_back(i);
    }
    if (sites.empty()) {
        throw NotApplicable(TechniqueTag::UpLowCase, "no cmdlet name");
    }
    auto flip = [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return static_cast<char>(std::isupper(u) ? std::tolower(u) : std::toupper(u));
    };
    std::vector<Edit> edits;
    for (auto pick : choose_sites(sites.size(), rng, opt)) {
        const Token& t = tk.toks[sites[pick]];
        std::string text = t.text;
        for (auto& c : text) {
            if (std::isalpha(static_cast<unsigned char>(c)) && (!opt.randomize || coin(rng))) c = flip(c);
        }
        if (text == t.text) {
            text[0] = flip(text[0]);
        }
        edits.push_back({t.span, std::move(text)});
    }
    return s.derive(apply_edits(s.content, std::move(edits)));
}

ScriptText spaces(const ScriptText& s, Rng& rng, const ObfuscateOptions& opt) {
    const Tokens tk(s.content);
    std::vector<std::size_t> sites;
    for (std::size_t i = 1; i + 1 < tk.toks.size(); ++i) {
        if (tk.toks[i].is(TokenKind::Whitespace) && !tk.toks[i - 1].is(TokenKind::Newline) &&
            !tk.toks[i + 1].is(TokenKind::Newline) && !tk.toks[i + 1].is(TokenKind::Comment)) {
            sites.push_back(i);
        }
    }
    if (sites.empty()) {
        throw NotApplicable(TechniqueTag::WhiteSpaces, "no in-line whitespace");
    }
    std::vector<Edit> edits;
    for (auto pick : choose_sites(sites.size(), rng, opt)) {
        const std::size_t width = opt.randomize ? 3 + draw(rng, 6) : 3;
        edits.push_back({tk.toks[sites[pick]].span, std::string(width, ' ')});
    }
    return s.derive(apply_edits(s.content, std::move(edits)));
}

// ---- encodings ------------------------------------------------------------

bool mixed_case(std::string_view s) {
    const bool up = std::any_of(s.begin(), s.end(), [](char c) { return c >= 'A' && c <= 'Z'; });
    const bool low = std::any_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
    return up && low;
}

ScriptText base64_layer(const ScriptText& s, Rng& rng, const ObfuscateOptions& opt) {
    if (s.content.empty()) {
        throw NotApplicable(TechniqueTag::Base64Encoding, "empty script");
    }
    const std::string utf8_blob = base64_encode(s.content);
    const bool bare_ok = utf8_blob.size() >= 16 && mixed_case(utf8_blob);
    std::size_t form = 0;
    if (opt.randomize) {
        form = bare_ok ? draw(rng, 3) : 1 + draw(rng, 2);
    } else if (!bare_ok) {
        form = 1;
    }
    if (form == 0) {
        return s.derive(utf8_blob);
    }
    if (form == 1) {
        static constexpr std::array<std::string_view, 3> kLaunchers{"powershell", "powershell.exe", "pwsh"};
        static constexpr std::array<std::string_view, 4> kFlags{"-EncodedCommand", "-enc", "-e", "-ec"};
        static constexpr std::array<std::string_view, 4> kExtra{"-NoP", "-NonI", "-W Hidden", "-ExecutionPolicy Bypass"};
        std::string line(opt.randomize ? kLaunchers[draw(rng, kLaunchers.size())] : kLaunchers[1]);
        if (opt.randomize) {
            for (auto x : kExtra) {
                if (coin(rng)) line += " " + std::string(x);
            }
        } else {
            line += " -NoProfile";
        }
        line += " " + std::string(opt.randomize ? kFlags[draw(rng, kFlags.size())] : kFlags[0]);
        line += " " + base64_encode(text::utf8_to_utf16le(s.content));
        return s.derive(line);
    }
    const bool unicode = coin(rng);
    const std::string blob = unicode ? base64_encode(text::utf8_to_utf16le(s.content)) : utf8_blob;
    const std::string_view iex = coin(rng) ? "Invoke-Expression" : "IEX";
    return s.derive(std::string(iex) + " ([Text.Encoding]::" + (unicode ? "Unicode" : "UTF8") +
                    ".GetString([Convert]::FromBase64String('" + blob + "')))");
}

ScriptText binary_layer(const ScriptText& s, Rng& rng, const ObfuscateOptions& opt) {
    if (s.content.size() < 16) {
        throw NotApplicable(TechniqueTag::BinaryEncoding, "script shorter than 16 bytes");
    }
    const char sep = opt.randomize && coin(rng) ? ',' : ' ';
    std::string bits;
    bits.reserve(s.content.size() * 9);
    for (unsigned char c : s.content) {
        if (!bits.empty()) bits.push_back(sep);
        for (int b = 7; b >= 0; --b) bits.push_back(((c >> b) & 1u) != 0 ? '1' : '0');
    }
    return s.derive("$b = '" + bits + "'\nIEX (-join ($b -split '" + std::string(1, sep) +
                    "' | ForEach-Object { [char][Convert]::ToInt32($_, 2) }))");
}

std::string compress(std::string_view data, LayerType::Compression kind) {
    z_stream zs{};
    const int window = kind == LayerType::Compression::Gzip ? 31 : -15;
    if (deflateInit2(&zs, 9, Z_DEFLATED, window, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
        throw std::runtime_error("deflateInit2 failed");
    }
    std::string out(deflateBound(&zs, static_cast<uLong>(data.size())) + 32, '\0');
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
    zs.avail_in = static_cast<uInt>(data.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) {
        throw std::runtime_error("deflate did not finish");
    }
    return out;
}

ScriptText compressed_layer(const ScriptText& s, LayerType::Compression kind, Rng& rng, const ObfuscateOptions& opt) {
    const std::string blob = base64_encode(compress(s.content, kind));
    const std::string stream = kind == LayerType::Compression::Gzip ? "GzipStream" : "DeflateStream";
    const bool via_var = opt.randomize && coin(rng);
    const std::string source = via_var ? "$s" : "'" + blob + "'";
    std::string out;
    if (via_var) {
        out += "$s = '" + blob + "'\n";
    }
    out += "IEX (New-Object IO.StreamReader((New-Object IO.Compression." + stream +
           "([IO.MemoryStream][Convert]::FromBase64String(" + source +
           "), [IO.Compression.CompressionMode]::Decompress)), [Text.Encoding]::ASCII)).ReadToEnd()";
    return s.derive(std::move(out));
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

ScriptText obfuscate(const ScriptText& script, TechniqueTag technique, std::uint64_t seed,
                     const ObfuscateOptions& options) {
    Rng rng(mix(seed ^ (static_cast<std::uint64_t>(technique) << 56)));
    switch (technique) {
        case TechniqueTag::Concatenation: return concat(script, rng, options);
        case TechniqueTag::Reordering: return reorder(script, rng, options);
        case TechniqueTag::Tick: return tick(script, rng, options);
        case TechniqueTag::Eval: return eval(script, rng, options);
        case TechniqueTag::UpLowCase: return upcase(script, rng, options);
        case TechniqueTag::WhiteSpaces: return spaces(script, rng, options);
        case TechniqueTag::Base64Encoding: return base64_layer(script, rng, options);
        case TechniqueTag::BinaryEncoding: return binary_layer(script, rng, options);
        case TechniqueTag::DeflateCompression:
            return compressed_layer(script, LayerType::Compression::Deflate, rng, options);
        case TechniqueTag::GzipCompression:
            return compressed_layer(script, LayerType::Compression::Gzip, rng, options);
    }
    throw std::invalid_argument("unknown technique");
}

namespace {

TechniqueTag envelope_technique(const LayerType& layer) {
    if (layer.variant == LayerType::Variant::Encoded && layer.encoding) {
        return *layer.encoding == LayerType::Encoding::Binary ? TechniqueTag::BinaryEncoding
                                                              : TechniqueTag::Base64Encoding;
    }
    if (layer.variant == LayerType::Variant::Compressed && layer.compression) {
        return *layer.compression == LayerType::Compression::Gzip ? TechniqueTag::GzipCompression
                                                                  : TechniqueTag::DeflateCompression;
    }
    throw std::invalid_argument("layer " + describe(layer) + " is not an envelope");
}

}  // namespace

std::pair<ScriptText, StackLabel> obfuscate_layers(const ScriptText& script, const std::vector<LayerSpec>& layers,
                                                   std::uint64_t seed, const ObfuscateOptions& options) {
    if (layers.empty()) {
        throw std::invalid_argument("layer stack is empty");
    }
    ScriptText cur = script;
    std::uint64_t s = seed;
    for (const auto& l : layers) {
        if (l.layer.variant == LayerType::Variant::StringBased) {
            if (l.techniques.empty()) {
                throw std::invalid_argument("string layer without techniques");
            }
            for (auto t : l.techniques) {
                if (!is_string_technique(t)) {
                    throw std::invalid_argument(std::string(to_string(t)) + " is not a string technique");
                }
                s = mix(s);
                cur = obfuscate(cur, t, s, options);
            }
        } else if (l.layer.variant == LayerType::Variant::Clean) {
            throw std::invalid_argument("a Clean layer cannot be applied");
        } else {
            s = mix(s);
            cur = obfuscate(cur, envelope_technique(l.layer), s, options);
        }
    }
    return {std::move(cur), StackLabel{layers}};
}

namespace {

struct ShortName {
    std::string_view name;
    TechniqueTag tag;
};

constexpr ShortName kShortNames[] = {
    {"concat", TechniqueTag::Concatenation}, {"reorder", TechniqueTag::Reordering},
    {"tick", TechniqueTag::Tick},            {"eval", TechniqueTag::Eval},
    {"case", TechniqueTag::UpLowCase},       {"ws", TechniqueTag::WhiteSpaces},
};

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::vector<std::string> split(std::string_view s, std::string_view seps) {
    std::vector<std::string> out;
    std::size_t from = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || seps.find(s[i]) != std::string_view::npos) {
            out.push_back(trim(s.substr(from, i - from)));
            from = i + 1;
        }
    }
    return out;
}

TechniqueTag parse_string_technique(const std::string& name) {
    const std::string low = to_lower(name);
    for (const auto& sn : kShortNames) {
        if (sn.name == low) return sn.tag;
    }
    for (auto t : kStringTechniques) {
        if (iequals(to_string(t), name)) return t;
    }
    throw std::invalid_argument("unknown string technique '" + name + "'");
}

}  // namespace

std::vector<LayerSpec> parse_layer_spec(std::string_view spec) {
    std::vector<LayerSpec> out;
    for (const auto& part : split(spec, ">")) {
        const std::string low = to_lower(part);
        LayerSpec l;
        if (low.starts_with("string:") || low.starts_with("str:")) {
            l.layer = LayerType::string_based();
            for (const auto& t : split(part.substr(part.find(':') + 1), "+,")) {
                l.techniques.push_back(parse_string_technique(t));
            }
        } else if (low == "base64") {
            l.layer = LayerType::encoded(LayerType::Encoding::Base64);
        } else if (low == "binary") {
            l.layer = LayerType::encoded(LayerType::Encoding::Binary);
        } else if (low == "deflate") {
            l.layer = LayerType::compressed(LayerType::Compression::Deflate);
        } else if (low == "gzip") {
            l.layer = LayerType::compressed(LayerType::Compression::Gzip);
        } else {
            throw std::invalid_argument("unknown layer '" + part + "' in layer spec");
        }
        out.push_back(std::move(l));
    }
    if (out.empty()) {
        throw std::invalid_argument("empty layer spec");
    }
    return out;
}

std::string format_layer_spec(const std::vector<LayerSpec>& layers) {
    std::string out;
    for (const auto& l : layers) {
        if (!out.empty()) out += ">";
        switch (l.layer.variant) {
            case LayerType::Variant::StringBased: {
                out += "string:";
                for (std::size_t i = 0; i < l.techniques.size(); ++i) {
                    if (i > 0) out += "+";
                    const auto it = std::find_if(std::begin(kShortNames), std::end(kShortNames),
                                                 [&](const ShortName& s) { return s.tag == l.techniques[i]; });
                    out += it != std::end(kShortNames) ? std::string(it->name) : std::string(to_string(l.techniques[i]));
                }
                break;
            }
            case LayerType::Variant::Encoded:
                out += l.layer.encoding == LayerType::Encoding::Binary ? "binary" : "base64";
                break;
            case LayerType::Variant::Compressed:
                out += l.layer.compression == LayerType::Compression::Gzip ? "gzip" : "deflate";
                break;
            case LayerType::Variant::Clean:
                out += "clean";
                break;
        }
    }
    return out;
}

}  // namespace psdeob
