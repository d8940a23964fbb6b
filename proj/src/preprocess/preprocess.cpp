#include "psdeob/preprocess.hpp"

#include "stringdeobf/sites.hpp"

#include <cctype>

namespace psdeob {

ScriptText join_multiline(const ScriptText& script) {
    std::vector<Token> toks;
    try {
        toks = tokenize(script.content);
    } catch (const TokenizeError&) {
        return script;
    }
    std::vector<sdo::Edit> edits;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        const Token& t = toks[i];
        if (t.is(TokenKind::Backtick) && i + 1 < toks.size() && toks[i + 1].is(TokenKind::Newline)) {
            std::size_t k = i + 2;
            while (k < toks.size() && toks[k].is(TokenKind::Whitespace)) ++k;
            const std::size_t end = k < toks.size() ? toks[k].span.start : script.content.size();
            edits.push_back({Span{t.span.start, end}, " "});
            i = k - 1;
            continue;
        }
        const bool opener = t.is(TokenKind::Pipe) || t.is_op("+") || t.is_op(",") || t.is(TokenKind::LParen) ||
                            t.is(TokenKind::LBrace) || t.is_op("[");
        if (!opener) {
            continue;
        }
        std::size_t k = i + 1;
        bool newline = false;
        while (k < toks.size() && (toks[k].is(TokenKind::Whitespace) || toks[k].is(TokenKind::Newline))) {
            newline = newline || toks[k].is(TokenKind::Newline);
            ++k;
        }
        if (!newline || k >= toks.size()) {
            continue;
        }
        edits.push_back({Span{t.span.end, toks[k].span.start}, " "});
        i = k - 1;
    }
    if (edits.empty()) {
        return script;
    }
    return script.derive(sdo::apply_edits(script.content, std::move(edits)));
}

namespace {

std::string strip_garbage(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (c == 0xEF && i + 2 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0xBF &&
            static_cast<unsigned char>(s[i + 2]) == 0xBD) {
            i += 2;  // U+FFFD
            continue;
        }
        if (c == 0xEF && i == 0 && s.size() >= 3 && static_cast<unsigned char>(s[1]) == 0xBB &&
            static_cast<unsigned char>(s[2]) == 0xBF) {
            i += 2;  // stray BOM
            continue;
        }
        if ((c < 0x20 && c != '\t' && c != '\n' && c != '\r') || c == 0x7F) {
            continue;
        }
        out.push_back(s[i]);
    }
    return out;
}

std::size_t skip_blank(std::string_view s, std::size_t p) {
    while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
    return p;
}

/// Next whitespace-delimited word, honoring a leading double quote.
std::string_view next_word(std::string_view s, std::size_t p, std::size_t& end) {
    if (p < s.size() && s[p] == '"') {
        const auto q = s.find('"', p + 1);
        end = q == std::string_view::npos ? s.size() : q + 1;
        return s.substr(p, end - p);
    }
    end = p;
    while (end < s.size() && s[end] != ' ' && s[end] != '\t' && s[end] != '\n' && s[end] != '\r') ++end;
    return s.substr(p, end - p);
}

bool is_launcher(std::string_view w) {
    std::string s = to_lower(w);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
    }
    const auto slash = s.find_last_of("\\/");
    if (slash != std::string::npos) {
        s = s.substr(slash + 1);
    }
    return s == "powershell" || s == "powershell.exe" || s == "pwsh" || s == "pwsh.exe";
}

std::optional<std::string> flag_of(std::string_view w) {
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

bool prefix_of(std::string_view name, std::string_view full, std::size_t min = 1) {
    return name.size() >= min && name.size() <= full.size() && full.substr(0, name.size()) == name;
}

/// Strip `cmd /c` and powershell launcher prefixes. Returns nullopt when
/// there is nothing to strip.
std::optional<std::string> strip_launcher(std::string_view s) {
    std::size_t p = skip_blank(s, 0);
    std::size_t end = 0;
    std::string_view w = next_word(s, p, end);
    const std::string lw = to_lower(w);
    if (lw == "cmd" || lw == "cmd.exe" || lw == "%comspec%" || lw.ends_with("\\cmd.exe")) {
        std::size_t e2 = 0;
        const std::size_t p2 = skip_blank(s, end);
        const std::string sw = to_lower(next_word(s, p2, e2));
        if (sw != "/c" && sw != "/k" && sw != "/r") {
            return std::nullopt;
        }
        p = skip_blank(s, e2);
        if (p < s.size() && s[p] == '"') {
            // cmd /c "powershell ..." - drop the wrapping quotes.
            std::string_view rest = s.substr(p + 1);
            auto last = rest.find_last_not_of(" \t\r\n");
            if (last != std::string_view::npos && rest[last] == '"') {
                rest = rest.substr(0, last);
            }
            std::string inner(rest);
            return strip_launcher(inner);
        }
        w = next_word(s, p, end);
    }
    if (!is_launcher(w)) {
        return std::nullopt;
    }
    p = end;
    for (;;) {
        p = skip_blank(s, p);
        if (p >= s.size()) {
            return std::string();
        }
        w = next_word(s, p, end);
        auto flag = flag_of(w);
        if (!flag || flag->empty()) {
            return std::string(s.substr(p));
        }
        const std::string& f = *flag;
        if (f == "e" || f == "ec" || prefix_of(f, "encodedcommand", 2)) {
            return std::string(s.substr(p));
        }
        if (prefix_of(f, "command")) {
            std::size_t q = skip_blank(s, end);
            std::string_view rest = s.substr(q);
            auto last = rest.find_last_not_of(" \t\r\n");
            rest = last == std::string_view::npos ? std::string_view{} : rest.substr(0, last + 1);
            if (rest.size() >= 2 && (rest.front() == '"' || rest.front() == '\'') && rest.back() == rest.front() &&
                rest.substr(1, rest.size() - 2).find(rest.front()) == std::string_view::npos) {
                rest = rest.substr(1, rest.size() - 2);
            }
            return std::string(rest);
        }
        if (prefix_of(f, "file")) {
            return std::nullopt;
        }
        static constexpr std::string_view kValued[] = {"executionpolicy", "windowstyle", "version",
                                                       "inputformat",     "outputformat", "configurationname",
                                                       "workingdirectory", "psconsolefile", "settingsfile"};
        bool valued = f == "ep" || f == "ex" || f == "exec" || f == "wd" || f == "v" || f == "if" || f == "of";
        for (auto name : kValued) {
            if (prefix_of(f, name, name == "windowstyle" ? 1 : 2)) {
                valued = true;
            }
        }
        p = end;
        if (valued) {
            p = skip_blank(s, p);
            next_word(s, p, end);
            p = end;
        }
    }
}

/// Drop a lone leading or trailing quote that leaves the script untokenizable.
std::optional<std::string> strip_quote_artifact(const std::string& s) {
    try {
        (void)tokenize(s);
        return std::nullopt;
    } catch (const TokenizeError&) {
    }
    auto first = s.find_first_not_of(" \t\r\n");
    auto last = s.find_last_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return std::nullopt;
    }
    for (int side = 0; side < 2; ++side) {
        const std::size_t at = side == 0 ? first : last;
        if (s[at] != '"' && s[at] != '\'') {
            continue;
        }
        std::string candidate = s;
        candidate.erase(at, 1);
        try {
            (void)tokenize(candidate);
            return candidate;
        } catch (const TokenizeError&) {
        }
    }
    return std::nullopt;
}

}  // namespace

ScriptText cleanup(const ScriptText& script) {
    std::string cur = strip_garbage(script.content);
    for (int guard = 0; guard < 16; ++guard) {
        std::string next = cur;
        if (auto s = strip_launcher(next)) {
            next = *s;
        }
        if (auto q = strip_quote_artifact(next)) {
            next = *q;
        }
        next = strip_garbage(next);
        if (next == cur) {
            break;
        }
        cur = std::move(next);
    }
    if (cur == script.content) {
        return script;
    }
    return script.derive(std::move(cur));
}

std::optional<SyntaxError> syntax_check(const ScriptText& script) {
    if (script.content.find_first_not_of(" \t\r\n") == std::string::npos) {
        return SyntaxError{"empty script", 0};
    }
    std::vector<Token> toks;
    try {
        toks = tokenize(script.content);
    } catch (const TokenizeError& e) {
        return SyntaxError{std::string(e.what()) + " at offset " + std::to_string(e.offset()), e.offset()};
    }
    struct Open {
        char want;
        std::string_view name;
        std::size_t offset;
    };
    std::vector<Open> stack;
    for (const auto& t : toks) {
        if (t.is(TokenKind::LParen)) {
            stack.push_back({')', "paren", t.span.start});
        } else if (t.is(TokenKind::LBrace)) {
            stack.push_back({'}', "brace", t.span.start});
        } else if (t.is_op("[")) {
            stack.push_back({']', "bracket", t.span.start});
        } else if (t.is(TokenKind::RParen) || t.is(TokenKind::RBrace) || t.is_op("]")) {
            const char c = t.text[0];
            const std::string_view name = c == ')' ? "paren" : c == '}' ? "brace" : "bracket";
            if (stack.empty() || stack.back().want != c) {
                return SyntaxError{"unbalanced " + std::string(name) + " at offset " + std::to_string(t.span.start),
                                   t.span.start};
            }
            stack.pop_back();
        }
    }
    if (!stack.empty()) {
        const auto& o = stack.front();
        return SyntaxError{"unbalanced " + std::string(o.name) + " at offset " + std::to_string(o.offset), o.offset};
    }
    return std::nullopt;
}

}  // namespace psdeob
