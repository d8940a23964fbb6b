#include "psdeob/detector.hpp"

#include "psdeob/decoder.hpp"
#include "stringdeobf/sites.hpp"

#include <cctype>

namespace psdeob {

std::string_view to_string(Base64Context ctx) {
    switch (ctx) {
        case Base64Context::EncodedCommandFlag: return "EncodedCommandFlag";
        case Base64Context::FromBase64Call: return "FromBase64Call";
        case Base64Context::BareBlob: return "BareBlob";
    }
    return "BareBlob";
}

namespace {

bool b64_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '+' || c == '/';
}

bool mixed_case(std::string_view s) {
    bool upper = false;
    bool lower = false;
    for (char c : s) {
        upper = upper || (c >= 'A' && c <= 'Z');
        lower = lower || (c >= 'a' && c <= 'z');
    }
    return upper && lower;
}

std::string strip_ws(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c != ' ' && c != '\t' && c != '\r' && c != '\n') {
            out.push_back(c);
        }
    }
    return out;
}

struct Scan {
    const ScriptText& script;
    std::vector<Token> toks;
    bool tokenized = false;
    std::vector<Span> comments;

    explicit Scan(const ScriptText& s) : script(s) {
        try {
            toks = tokenize(s.content);
            tokenized = true;
        } catch (const TokenizeError&) {
            tokenized = false;
        }
        for (const auto& t : toks) {
            if (t.is(TokenKind::Comment)) {
                comments.push_back(t.span);
            }
        }
    }

    bool in_comment(std::size_t pos) const {
        for (const auto& c : comments) {
            if (pos >= c.start && pos < c.end) {
                return true;
            }
        }
        return false;
    }

    std::size_t next_sig(std::size_t i) const {
        ++i;
        while (i < toks.size() && toks[i].is_trivia()) ++i;
        return i;
    }

    long prev_sig(std::size_t i) const {
        long k = static_cast<long>(i) - 1;
        while (k >= 0 && toks[static_cast<std::size_t>(k)].is_trivia()) --k;
        return k;
    }
};

std::optional<PayloadLocation> literal_payload(const Token& t) {
    if (!t.is_string() || t.text.empty() || t.text.front() == '@') {
        return std::nullopt;
    }
    auto value = literal_value(t);
    if (!value) {
        return std::nullopt;
    }
    if (!is_base64_shaped(strip_ws(*value), 4)) {
        return std::nullopt;
    }
    PayloadLocation p;
    p.span = Span{t.span.start + 1, t.span.end - 1};
    p.blob = *value;
    p.context = Base64Context::FromBase64Call;
    return p;
}

/// Argument of a FromBase64String call: a literal, or a variable whose
/// (last preceding) assignment is a literal.
std::optional<PayloadLocation> frombase64_payload(const Scan& sc, Span* call_span) {
    for (std::size_t i = 0; i < sc.toks.size(); ++i) {
        const Token& t = sc.toks[i];
        const bool name = (t.is_word() && iequals(t.text, "FromBase64String")) ||
                          (t.is(TokenKind::MethodCall) && iequals(t.text, ".FromBase64String"));
        if (!name) {
            continue;
        }
        std::size_t k = sc.next_sig(i);
        if (k >= sc.toks.size() || !sc.toks[k].is(TokenKind::LParen)) {
            continue;
        }
        k = sc.next_sig(k);
        if (k >= sc.toks.size()) {
            continue;
        }
        if (call_span != nullptr) {
            *call_span = t.span;
        }
        const Token& arg = sc.toks[k];
        if (arg.is_string()) {
            if (auto p = literal_payload(arg)) {
                return p;
            }
            continue;
        }
        if (!arg.is(TokenKind::Variable)) {
            continue;
        }
        const std::string key = to_lower(arg.text);
        for (long j = static_cast<long>(i) - 1; j >= 0; --j) {
            const Token& v = sc.toks[static_cast<std::size_t>(j)];
            if (!v.is(TokenKind::Variable) || to_lower(v.text) != key) {
                continue;
            }
            const std::size_t eq = sc.next_sig(static_cast<std::size_t>(j));
            if (eq >= sc.toks.size() || !sc.toks[eq].is_op("=")) {
                continue;
            }
            const std::size_t lit = sc.next_sig(eq);
            if (lit < sc.toks.size()) {
                if (auto p = literal_payload(sc.toks[lit])) {
                    return p;
                }
            }
            break;
        }
    }
    return std::nullopt;
}

bool is_powershell_word(std::string_view w) {
    std::string s = to_lower(w);
    while (!s.empty() && (s.front() == '"' || s.front() == '\'')) s.erase(s.begin());
    while (!s.empty() && (s.back() == '"' || s.back() == '\'')) s.pop_back();
    const auto slash = s.find_last_of("\\/");
    if (slash != std::string::npos) {
        s = s.substr(slash + 1);
    }
    return s == "powershell" || s == "powershell.exe" || s == "pwsh" || s == "pwsh.exe";
}

/// Name of a dash-prefixed flag (`-x`, en/em dash, or `/x`), lowercased.
std::optional<std::string> flag_name(std::string_view w) {
    if (!w.empty() && (w.front() == '-' || w.front() == '/')) {
        return to_lower(w.substr(1));
    }
    for (std::string_view dash : {std::string_view("\xE2\x80\x93"), std::string_view("\xE2\x80\x94")}) {
        if (w.substr(0, dash.size()) == dash) {
            return to_lower(w.substr(dash.size()));
        }
    }
    return std::nullopt;
}

bool is_encoded_flag(std::string_view w) {
    auto name = flag_name(w);
    if (!name || name->empty()) {
        return false;
    }
    return *name == "ec" || std::string_view("encodedcommand").substr(0, name->size()) == *name;
}

std::optional<std::pair<Span, PayloadLocation>> encoded_flag(const Scan& sc) {
    const std::string& s = sc.script.content;
    for (std::size_t i = 0; i < sc.toks.size(); ++i) {
        const Token& t = sc.toks[i];
        if (!t.is_word() || !is_encoded_flag(t.text)) {
            continue;
        }
        // Walk back to the statement start over launcher words and flags.
        bool ok = false;
        long k = sc.prev_sig(i);
        std::size_t first = i;
        for (;;) {
            if (k < 0) {
                ok = true;
                break;
            }
            const Token& p = sc.toks[static_cast<std::size_t>(k)];
            if (p.is(TokenKind::Newline) || p.is(TokenKind::Semicolon) || p.is(TokenKind::Pipe) ||
                p.is(TokenKind::LBrace)) {
                ok = true;
                break;
            }
            if (p.is_word() && is_powershell_word(p.text)) {
                ok = true;
                first = static_cast<std::size_t>(k);
                break;
            }
            if (!(p.is_word() || p.is_string() || p.is(TokenKind::Number) || p.is(TokenKind::CallOperator))) {
                break;
            }
            first = static_cast<std::size_t>(k);
            k = sc.prev_sig(static_cast<std::size_t>(k));
        }
        if (!ok) {
            continue;
        }
        const Token& lead = sc.toks[first];
        if (first != i && !(lead.is_word() && (is_powershell_word(lead.text) || flag_name(lead.text))) &&
            !(lead.is_string() && is_powershell_word(lead.text))) {
            continue;
        }
        std::size_t p = t.span.end;
        while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
        char quote = 0;
        if (p < s.size() && (s[p] == '\'' || s[p] == '"')) {
            quote = s[p];
            ++p;
        }
        std::size_t e = p;
        while (e < s.size() && (b64_char(s[e]) || s[e] == '=')) ++e;
        if (quote != 0 && (e >= s.size() || s[e] != quote)) {
            continue;
        }
        const std::string_view blob(s.data() + p, e - p);
        if (!is_base64_shaped(blob, 8)) {
            continue;
        }
        PayloadLocation loc;
        loc.span = Span{p, e};
        loc.blob = std::string(blob);
        loc.context = Base64Context::EncodedCommandFlag;
        return std::make_pair(Span{t.span.start, e}, loc);
    }
    return std::nullopt;
}

std::optional<PayloadLocation> binary_run(const Scan& sc) {
    const std::string& s = sc.script.content;
    auto bit = [](char c) { return c == '0' || c == '1'; };
    auto word_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    std::size_t groups = 0;
    std::size_t seq_start = 0;
    std::size_t seq_end = 0;
    std::size_t i = 0;
    auto flush = [&]() -> std::optional<PayloadLocation> {
        if (groups >= 16) {
            PayloadLocation loc;
            loc.span = Span{seq_start, seq_end};
            loc.blob = s.substr(seq_start, seq_end - seq_start);
            loc.context = Base64Context::BareBlob;
            return loc;
        }
        groups = 0;
        return std::nullopt;
    };
    while (i < s.size()) {
        if (!bit(s[i]) || (i > 0 && word_char(s[i - 1])) || sc.in_comment(i)) {
            ++i;
            continue;
        }
        std::size_t e = i;
        while (e < s.size() && bit(s[e])) ++e;
        const bool bounded = e >= s.size() || !word_char(s[e]);
        const std::size_t len = e - i;
        if (!bounded || len % 8 != 0) {
            if (auto r = flush()) return r;
            i = e;
            continue;
        }
        if (groups == 0) {
            seq_start = i;
        }
        groups += len / 8;
        seq_end = e;
        // Continue only across separators.
        std::size_t n = e;
        while (n < s.size() && (s[n] == ' ' || s[n] == '\t' || s[n] == ',' || s[n] == '\r' || s[n] == '\n')) ++n;
        if (n >= s.size() || !bit(s[n])) {
            if (auto r = flush()) return r;
        }
        i = n;
    }
    return flush();
}

std::optional<PayloadLocation> bare_blob(const Scan& sc) {
    const std::string& s = sc.script.content;
    auto bad_before = [](char c) {
        return b64_char(c) || c == '=' || c == '_' || c == '-' || c == '.' || c == '\\' || c == ':' || c == '$';
    };
    auto bad_after = [](char c) { return b64_char(c) || c == '=' || c == '_' || c == '-' || c == '.' || c == '\\'; };
    std::size_t i = 0;
    while (i < s.size()) {
        if (!b64_char(s[i])) {
            ++i;
            continue;
        }
        std::size_t e = i;
        while (e < s.size() && b64_char(s[e])) ++e;
        const std::size_t core = e - i;
        std::size_t pe = e;
        while (pe < s.size() && s[pe] == '=' && pe - e < 2) ++pe;
        const bool left_ok = i == 0 || !bad_before(s[i - 1]);
        const bool right_ok = pe >= s.size() || !bad_after(s[pe]);
        const std::string_view run(s.data() + i, pe - i);
        if (core >= 40 && left_ok && right_ok && run.size() % 4 == 0 && mixed_case(run) && !sc.in_comment(i)) {
            PayloadLocation loc;
            loc.span = Span{i, pe};
            loc.blob = std::string(run);
            loc.context = Base64Context::BareBlob;
            return loc;
        }
        i = pe > i ? pe : i + 1;
    }
    // A script that is nothing but one shorter blob.
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    const std::string_view whole(s.data() + a, b - a);
    if (is_base64_shaped(whole, 16) && mixed_case(whole)) {
        try {
            (void)decode_base64(whole, Base64Context::BareBlob);
            PayloadLocation loc;
            loc.span = Span{a, b};
            loc.blob = std::string(whole);
            loc.context = Base64Context::BareBlob;
            return loc;
        } catch (const DecodeError&) {
        }
    }
    return std::nullopt;
}

std::optional<std::pair<Span, LayerType::Compression>> compression_marker(const std::string& lower) {
    const auto gz = lower.find("gzipstream");
    const auto df = lower.find("deflatestream");
    if (gz == std::string::npos && df == std::string::npos) {
        return std::nullopt;
    }
    if (gz != std::string::npos && (df == std::string::npos || gz < df)) {
        return std::make_pair(Span{gz, gz + 10}, LayerType::Compression::Gzip);
    }
    return std::make_pair(Span{df, df + 13}, LayerType::Compression::Deflate);
}

}  // namespace

bool is_base64_shaped(std::string_view s, std::size_t min_len) {
    if (s.size() < min_len || s.empty() || s.size() % 4 != 0) {
        return false;
    }
    std::size_t pad = 0;
    while (pad < s.size() && s[s.size() - 1 - pad] == '=') ++pad;
    if (pad > 2) {
        return false;
    }
    for (std::size_t i = 0; i + pad < s.size(); ++i) {
        if (!b64_char(s[i])) {
            return false;
        }
    }
    return true;
}

std::vector<Evidence> string_technique_evidence(const ScriptText& script) {
    std::vector<Evidence> out;
    std::optional<sdo::View> view;
    try {
        view.emplace(script.content);
    } catch (const TokenizeError&) {
        return out;
    }
    const sdo::View& v = *view;
    for (const auto& e : sdo::concat_sites(v)) out.push_back({TechniqueTag::Concatenation, e.span});
    for (const auto& e : sdo::reorder_sites(v, nullptr)) out.push_back({TechniqueTag::Reordering, e.span});
    for (const auto& e : sdo::tick_sites(v)) out.push_back({TechniqueTag::Tick, e.span});
    for (const auto& sp : sdo::eval_evidence(v)) out.push_back({TechniqueTag::Eval, sp});
    for (const auto& e : sdo::case_sites(v)) out.push_back({TechniqueTag::UpLowCase, e.span});
    for (const auto& sp : sdo::ws_evidence(v)) out.push_back({TechniqueTag::WhiteSpaces, sp});
    return out;
}

std::vector<TechniqueTag> detect_string_techniques(const ScriptText& script) {
    std::vector<TechniqueTag> out;
    for (const auto& e : string_technique_evidence(script)) {
        if (out.empty() || out.back() != e.technique) {
            out.push_back(e.technique);
        }
    }
    return out;
}

LayerFinding detect_layer(const ScriptText& script) {
    LayerFinding f;
    const Scan sc(script);
    const std::string lower = to_lower(script.content);

    if (auto marker = compression_marker(lower)) {
        const auto fb = lower.find("frombase64string");
        if (fb != std::string::npos) {
            f.layer = LayerType::compressed(marker->second);
            f.confidence_rank = 0;
            const auto tag = marker->second == LayerType::Compression::Gzip ? TechniqueTag::GzipCompression
                                                                            : TechniqueTag::DeflateCompression;
            f.evidence.push_back({tag, marker->first});
            f.evidence.push_back({TechniqueTag::Base64Encoding, Span{fb, fb + 16}});
            f.payload = frombase64_payload(sc, nullptr);
            return f;
        }
    }

    f.confidence_rank = 1;
    if (auto flag = encoded_flag(sc)) {
        f.layer = LayerType::encoded(LayerType::Encoding::Base64);
        f.evidence.push_back({TechniqueTag::Base64Encoding, flag->first});
        f.payload = flag->second;
        return f;
    }
    if (auto bin = binary_run(sc)) {
        f.layer = LayerType::encoded(LayerType::Encoding::Binary);
        f.evidence.push_back({TechniqueTag::BinaryEncoding, bin->span});
        f.payload = std::move(bin);
        return f;
    }
    {
        Span call{};
        if (auto p = frombase64_payload(sc, &call)) {
            f.layer = LayerType::encoded(LayerType::Encoding::Base64);
            f.evidence.push_back({TechniqueTag::Base64Encoding, call});
            f.payload = std::move(p);
            return f;
        }
    }
    if (auto blob = bare_blob(sc)) {
        f.layer = LayerType::encoded(LayerType::Encoding::Base64);
        f.evidence.push_back({TechniqueTag::Base64Encoding, blob->span});
        f.payload = std::move(blob);
        return f;
    }

    auto evidence = string_technique_evidence(script);
    if (!evidence.empty()) {
        f.layer = LayerType::string_based();
        f.confidence_rank = 2;
        f.evidence = std::move(evidence);
        return f;
    }
    f.layer = LayerType::clean();
    f.confidence_rank = 3;
    return f;
}

}  // namespace psdeob
