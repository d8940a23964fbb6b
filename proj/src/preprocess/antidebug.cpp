#include "psdeob/preprocess.hpp"

#include "stringdeobf/sites.hpp"

#include <optional>

namespace psdeob {

std::string_view to_string(AntiDebug kind) {
    switch (kind) {
        case AntiDebug::Sleep: return "Sleep";
        case AntiDebug::OutNullRedirect: return "OutNullRedirect";
        case AntiDebug::InfiniteLoop: return "InfiniteLoop";
        case AntiDebug::TryCatch: return "TryCatch";
    }
    return "Sleep";
}

namespace {

struct Stmt {
    std::size_t first;  // token index of first significant token
    std::size_t last;   // token index of last significant token
};

class Statements {
public:
    explicit Statements(const sdo::View& v) : v_(v) {}

    /// Pre-order walk of every statement at every nesting level.
    template <typename F>
    bool walk(std::size_t begin, std::size_t end, F& f) const {
        for (const auto& st : split(begin, end)) {
            if (f(st)) {
                return true;
            }
            for (std::size_t i = st.first; i <= st.last; ++i) {
                const Token& t = v_.toks[i];
                const long m = v_.match[i];
                if (t.is(TokenKind::LBrace) && m > static_cast<long>(i)) {
                    if (walk(i + 1, static_cast<std::size_t>(m), f)) {
                        return true;
                    }
                }
                if ((t.is(TokenKind::LBrace) || t.is(TokenKind::LParen) || t.is_op("[")) &&
                    m > static_cast<long>(i) && !t.is(TokenKind::LBrace)) {
                    // Parenthesized sub-expressions may hold script blocks.
                    continue;
                }
            }
        }
        return false;
    }

    std::vector<Stmt> split(std::size_t begin, std::size_t end) const {
        std::vector<Stmt> out;
        std::size_t i = begin;
        const auto& toks = v_.toks;
        while (i < end) {
            const Token& t = toks[i];
            if (t.is_trivia() || t.is(TokenKind::Newline) || t.is(TokenKind::Semicolon)) {
                ++i;
                continue;
            }
            const std::size_t first = i;
            std::size_t last = i;
            std::size_t j = i;
            while (j < end) {
                const Token& u = toks[j];
                if (u.is(TokenKind::Semicolon)) {
                    break;
                }
                if (u.is(TokenKind::Newline)) {
                    std::size_t k = j + 1;
                    while (k < end && (toks[k].is_trivia() || toks[k].is(TokenKind::Newline))) ++k;
                    if (k < end && toks[last].is(TokenKind::RBrace) && continues(toks[first], toks[k])) {
                        j = k;
                        continue;
                    }
                    break;
                }
                if (u.is(TokenKind::RBrace) || u.is(TokenKind::RParen) || u.is_op("]")) {
                    if (v_.match[j] < static_cast<long>(first)) {
                        break;  // closes an enclosing block
                    }
                }
                if (!u.is_trivia()) {
                    last = j;
                }
                const long m = v_.match[j];
                if ((u.is(TokenKind::LBrace) || u.is(TokenKind::LParen) || u.is_op("[")) && m > static_cast<long>(j) &&
                    static_cast<std::size_t>(m) < end) {
                    j = static_cast<std::size_t>(m);
                    last = j;
                }
                ++j;
            }
            out.push_back({first, last});
            i = j;
        }
        return out;
    }

private:
    const sdo::View& v_;

    static bool continues(const Token& head, const Token& next) {
        if (!next.is_word()) {
            return false;
        }
        static constexpr std::string_view kCont[] = {"catch", "finally", "else", "elseif"};
        for (auto k : kCont) {
            if (iequals(next.text, k)) {
                return true;
            }
        }
        return iequals(head.text, "do") && (iequals(next.text, "while") || iequals(next.text, "until"));
    }
};

struct Found {
    AntiDebug kind;
    Span span;
    std::string replacement;
};

std::size_t next_sig(const sdo::View& v, std::size_t i, std::size_t limit) {
    ++i;
    while (i < limit && v.toks[i].is_trivia()) ++i;
    return i;
}

/// Region covering a whole statement plus its terminator, or (for the last
/// statement of a block) plus the separator before it.
Span statement_removal(const sdo::View& v, const Stmt& st) {
    const auto& toks = v.toks;
    std::size_t start = toks[st.first].span.start;
    std::size_t end = toks[st.last].span.end;
    std::size_t k = st.last + 1;
    while (k < toks.size() && toks[k].is(TokenKind::Whitespace)) ++k;
    if (k < toks.size() && toks[k].is(TokenKind::Semicolon)) {
        end = toks[k].span.end;
        ++k;
        while (k < toks.size() && toks[k].is(TokenKind::Whitespace)) {
            end = toks[k].span.end;
            ++k;
        }
        return Span{start, end};
    }
    if (k < toks.size() && toks[k].is(TokenKind::Newline)) {
        return Span{start, toks[k].span.end};
    }
    long b = static_cast<long>(st.first) - 1;
    while (b >= 0 && toks[static_cast<std::size_t>(b)].is(TokenKind::Whitespace)) --b;
    if (b >= 0 && toks[static_cast<std::size_t>(b)].is(TokenKind::Semicolon)) {
        start = toks[static_cast<std::size_t>(b)].span.start;
    }
    return Span{start, end};
}

bool is_sleep_statement(const sdo::View& v, const Stmt& st) {
    const Token& head = v.toks[st.first];
    if (head.is_word() && (iequals(head.text, "Start-Sleep") || iequals(head.text, "sleep"))) {
        return true;
    }
    // [System.Threading.Thread]::Sleep(...)
    if (!head.is_op("[")) {
        return false;
    }
    const std::size_t limit = st.last + 1;
    const std::size_t a = next_sig(v, st.first, limit);
    const std::size_t b = next_sig(v, a, limit);
    const std::size_t c = next_sig(v, b, limit);
    const std::size_t d = next_sig(v, c, limit);
    if (d >= limit) {
        return false;
    }
    const std::string type = to_lower(v.toks[a].text);
    return (type == "threading.thread" || type == "system.threading.thread") && v.toks[b].is_op("]") &&
           v.toks[c].is_op("::") && iequals(v.toks[d].text, "Sleep");
}

bool body_has_exit(const sdo::View& v, std::size_t open) {
    const long close = v.match[open];
    if (close < 0) {
        return true;
    }
    for (std::size_t i = open + 1; i < static_cast<std::size_t>(close); ++i) {
        const Token& t = v.toks[i];
        if (t.is_word() && (iequals(t.text, "break") || iequals(t.text, "return") || iequals(t.text, "exit") ||
                            iequals(t.text, "throw"))) {
            return true;
        }
    }
    return false;
}

bool constant_true(const sdo::View& v, std::size_t lparen) {
    const long rp = v.match[lparen];
    if (rp < 0) {
        return false;
    }
    const std::size_t inner = next_sig(v, lparen, static_cast<std::size_t>(rp));
    if (inner >= static_cast<std::size_t>(rp) || next_sig(v, inner, static_cast<std::size_t>(rp)) != static_cast<std::size_t>(rp)) {
        return false;
    }
    const Token& t = v.toks[inner];
    return (t.is(TokenKind::Variable) && iequals(t.text, "$true")) || (t.is(TokenKind::Number) && t.text == "1");
}

bool is_infinite_loop(const sdo::View& v, const Stmt& st) {
    const Token& head = v.toks[st.first];
    if (!head.is_word()) {
        return false;
    }
    const std::size_t limit = st.last + 1;
    if (iequals(head.text, "while")) {
        const std::size_t lp = next_sig(v, st.first, limit);
        if (lp >= limit || !v.toks[lp].is(TokenKind::LParen) || !constant_true(v, lp)) {
            return false;
        }
        const std::size_t body = next_sig(v, static_cast<std::size_t>(v.match[lp]), limit);
        return body < limit && v.toks[body].is(TokenKind::LBrace) && v.match[body] == static_cast<long>(st.last) &&
               !body_has_exit(v, body);
    }
    if (iequals(head.text, "for")) {
        const std::size_t lp = next_sig(v, st.first, limit);
        if (lp >= limit || !v.toks[lp].is(TokenKind::LParen)) {
            return false;
        }
        const std::size_t s1 = next_sig(v, lp, limit);
        const std::size_t s2 = next_sig(v, s1, limit);
        const std::size_t rp = next_sig(v, s2, limit);
        if (rp >= limit || !v.toks[s1].is(TokenKind::Semicolon) || !v.toks[s2].is(TokenKind::Semicolon) ||
            !v.toks[rp].is(TokenKind::RParen)) {
            return false;
        }
        const std::size_t body = next_sig(v, rp, limit);
        return body < limit && v.toks[body].is(TokenKind::LBrace) && v.match[body] == static_cast<long>(st.last) &&
               !body_has_exit(v, body);
    }
    if (iequals(head.text, "do")) {
        const std::size_t body = next_sig(v, st.first, limit);
        if (body >= limit || !v.toks[body].is(TokenKind::LBrace) || v.match[body] < 0) {
            return false;
        }
        std::size_t k = static_cast<std::size_t>(v.match[body]) + 1;
        while (k < limit && (v.toks[k].is_trivia() || v.toks[k].is(TokenKind::Newline))) ++k;
        if (k >= limit || !iequals(v.toks[k].text, "while")) {
            return false;
        }
        const std::size_t lp = next_sig(v, k, limit);
        return lp < limit && v.toks[lp].is(TokenKind::LParen) && constant_true(v, lp) &&
               v.match[lp] == static_cast<long>(st.last) && !body_has_exit(v, body);
    }
    return false;
}

std::string trimmed_body(const sdo::View& v, std::size_t open) {
    const auto close = static_cast<std::size_t>(v.match[open]);
    std::string_view body = v.src.substr(v.toks[open].span.end, v.toks[close].span.start - v.toks[open].span.end);
    const auto a = body.find_first_not_of(" \t\r\n");
    if (a == std::string_view::npos) {
        return {};
    }
    const auto b = body.find_last_not_of(" \t\r\n");
    return std::string(body.substr(a, b - a + 1));
}

std::optional<Found> try_catch(const sdo::View& v, const Stmt& st) {
    const Token& head = v.toks[st.first];
    if (!head.is_word() || !iequals(head.text, "try")) {
        return std::nullopt;
    }
    const std::size_t limit = st.last + 1;
    const std::size_t body = next_sig(v, st.first, limit);
    if (body >= limit || !v.toks[body].is(TokenKind::LBrace) || v.match[body] < 0) {
        return std::nullopt;
    }
    std::size_t k = static_cast<std::size_t>(v.match[body]);
    bool handlers = false;
    std::optional<std::size_t> finally_body;
    while (k < st.last) {
        k = next_sig(v, k, limit);
        while (k < limit && v.toks[k].is(TokenKind::Newline)) k = next_sig(v, k, limit);
        if (k >= limit) {
            break;
        }
        const Token& w = v.toks[k];
        if (!w.is_word() || (!iequals(w.text, "catch") && !iequals(w.text, "finally"))) {
            return std::nullopt;
        }
        const bool is_finally = iequals(w.text, "finally");
        std::size_t b = next_sig(v, k, limit);
        // catch [Type1], [Type2] { ... }
        while (b < limit && !v.toks[b].is(TokenKind::LBrace)) {
            if (v.toks[b].is_op("[") && v.match[b] > 0) {
                b = static_cast<std::size_t>(v.match[b]);
            } else if (!v.toks[b].is_op(",")) {
                return std::nullopt;
            }
            b = next_sig(v, b, limit);
        }
        if (b >= limit || v.match[b] < 0) {
            return std::nullopt;
        }
        handlers = true;
        if (is_finally) {
            finally_body = b;
        }
        k = static_cast<std::size_t>(v.match[b]);
    }
    if (!handlers) {
        return std::nullopt;
    }
    std::string replacement = trimmed_body(v, body);
    if (finally_body) {
        const std::string fin = trimmed_body(v, *finally_body);
        if (!fin.empty()) {
            replacement = replacement.empty() ? fin : replacement + "; " + fin;
        }
    }
    Found f;
    f.kind = AntiDebug::TryCatch;
    if (replacement.empty()) {
        f.span = statement_removal(v, st);
    } else {
        f.span = Span{v.toks[st.first].span.start, v.toks[st.last].span.end};
    }
    f.replacement = std::move(replacement);
    return f;
}

std::optional<Found> out_null(const sdo::View& v) {
    const auto& toks = v.toks;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (!toks[i].is(TokenKind::Pipe)) {
            continue;
        }
        const std::size_t w = next_sig(v, i, toks.size());
        if (w >= toks.size() || !toks[w].is_word() || !iequals(toks[w].text, "Out-Null")) {
            continue;
        }
        const std::size_t after = next_sig(v, w, toks.size());
        if (after < toks.size()) {
            const Token& a = toks[after];
            if (!a.is(TokenKind::Newline) && !a.is(TokenKind::Semicolon) && !a.is(TokenKind::RParen) &&
                !a.is(TokenKind::RBrace)) {
                continue;
            }
        }
        std::size_t start = toks[i].span.start;
        if (i > 0 && toks[i - 1].is(TokenKind::Whitespace)) {
            start = toks[i - 1].span.start;
        }
        return Found{AntiDebug::OutNullRedirect, Span{start, toks[w].span.end}, ""};
    }
    return std::nullopt;
}

std::optional<Found> first_removal(const sdo::View& v) {
    std::optional<Found> found;
    Statements stmts(v);
    auto visit = [&](const Stmt& st) {
        if (is_sleep_statement(v, st)) {
            found = Found{AntiDebug::Sleep, statement_removal(v, st), ""};
            return true;
        }
        if (is_infinite_loop(v, st)) {
            found = Found{AntiDebug::InfiniteLoop, statement_removal(v, st), ""};
            return true;
        }
        if (auto tc = try_catch(v, st)) {
            found = std::move(tc);
            return true;
        }
        return false;
    };
    stmts.walk(0, v.toks.size(), visit);
    auto on = out_null(v);
    if (on && (!found || on->span.start < found->span.start)) {
        return on;
    }
    return found;
}

}  // namespace

AntiDebugResult strip_antidebug(const ScriptText& script) {
    AntiDebugResult r;
    r.script = script;
    for (int guard = 0; guard < 10000; ++guard) {
        std::optional<sdo::View> view;
        try {
            view.emplace(r.script.content);
        } catch (const TokenizeError&) {
            break;
        }
        auto f = first_removal(*view);
        if (!f) {
            break;
        }
        std::string next = sdo::apply_edits(r.script.content, {{f->span, f->replacement}});
        ScriptText candidate = r.script.derive(std::move(next));
        if (syntax_check(candidate) && !syntax_check(r.script)) {
            break;
        }
        r.removed.push_back({f->kind, f->span, f->replacement});
        r.script = std::move(candidate);
        if (r.script.content.find_first_not_of(" \t\r\n") == std::string::npos) {
            break;
        }
    }
    return r;
}

}  // namespace psdeob
