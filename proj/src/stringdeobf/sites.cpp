#include "stringdeobf/sites.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <set>

namespace psdeob::sdo {

View::View(std::string_view source) : src(source), toks(tokenize(source)) {
    sig_of.assign(toks.size(), -1);
    match.assign(toks.size(), -1);
    depth.assign(toks.size(), 0);
    std::vector<std::size_t> stack;
    int d = 0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        const Token& t = toks[i];
        if (!t.is_trivia()) {
            sig_of[i] = static_cast<long>(sig.size());
            sig.push_back(i);
        }
        const bool open = t.is(TokenKind::LParen) || t.is(TokenKind::LBrace) || t.is_op("[");
        const bool close = t.is(TokenKind::RParen) || t.is(TokenKind::RBrace) || t.is_op("]");
        if (close && d > 0) {
            --d;
        }
        depth[i] = d;
        if (open) {
            stack.push_back(i);
            ++d;
        } else if (close && !stack.empty()) {
            const std::size_t o = stack.back();
            stack.pop_back();
            match[o] = static_cast<long>(i);
            match[i] = static_cast<long>(o);
        }
    }
}

const Token* View::raw_before(long j) const {
    const std::size_t i = sig[static_cast<std::size_t>(j)];
    return i == 0 ? nullptr : &toks[i - 1];
}

const Token* View::raw_after(long j) const {
    const std::size_t i = sig[static_cast<std::size_t>(j)] + 1;
    return i < toks.size() ? &toks[i] : nullptr;
}

bool is_keyword(std::string_view word) {
    static constexpr std::string_view kKeywords[] = {
        "if",     "elseif", "else",  "while", "until",    "for",  "foreach", "switch", "catch",
        "param",  "function", "filter", "trap", "do",     "try",  "finally", "return", "throw",
        "break",  "continue", "exit",  "in",   "begin",   "process", "end",  "data",
    };
    for (auto k : kKeywords) {
        if (iequals(k, word)) {
            return true;
        }
    }
    return false;
}

bool is_command_name(std::string_view value) {
    if (value.empty()) {
        return false;
    }
    const auto c0 = static_cast<unsigned char>(value[0]);
    if (!std::isalpha(c0) && value[0] != '_') {
        return false;
    }
    for (char c : value) {
        const auto u = static_cast<unsigned char>(c);
        if (!std::isalnum(u) && c != '_' && c != '.' && c != '-') {
            return false;
        }
    }
    return true;
}

std::string apply_edits(std::string_view src, std::vector<Edit> edits) {
    std::stable_sort(edits.begin(), edits.end(),
                     [](const Edit& a, const Edit& b) { return a.span.start < b.span.start; });
    std::string out;
    out.reserve(src.size());
    std::size_t pos = 0;
    for (const auto& e : edits) {
        if (e.span.start < pos || e.span.end > src.size()) {
            continue;
        }
        out.append(src.substr(pos, e.span.start - pos));
        out.append(e.replacement);
        pos = e.span.end;
    }
    out.append(src.substr(pos));
    return out;
}

FormatResult apply_format(std::string_view fmt, const std::vector<std::string>& args) {
    FormatResult r;
    std::string out;
    for (std::size_t i = 0; i < fmt.size(); ++i) {
        const char c = fmt[i];
        if (c == '{') {
            if (i + 1 < fmt.size() && fmt[i + 1] == '{') {
                out.push_back('{');
                ++i;
                continue;
            }
            std::size_t k = i + 1;
            std::size_t idx = 0;
            bool digits = false;
            while (k < fmt.size() && std::isdigit(static_cast<unsigned char>(fmt[k]))) {
                idx = idx * 10 + static_cast<std::size_t>(fmt[k] - '0');
                if (idx > 100000) {
                    break;
                }
                digits = true;
                ++k;
            }
            if (!digits || k >= fmt.size() || fmt[k] != '}') {
                r.error = "malformed format item at offset " + std::to_string(i);
                return r;
            }
            if (idx >= args.size()) {
                r.error = "format index " + std::to_string(idx) + " out of range (" +
                          std::to_string(args.size()) + " argument(s))";
                return r;
            }
            out += args[idx];
            i = k;
        } else if (c == '}') {
            if (i + 1 < fmt.size() && fmt[i + 1] == '}') {
                out.push_back('}');
                ++i;
                continue;
            }
            r.error = "unmatched '}' at offset " + std::to_string(i);
            return r;
        } else {
            out.push_back(c);
        }
    }
    r.ok = true;
    r.value = std::move(out);
    return r;
}

namespace {

bool is_literal(const Token& t) { return t.is_string() && literal_value(t).has_value(); }

bool is_here(const Token& t) { return t.is_string() && !t.text.empty() && t.text.front() == '@'; }

std::string var_key(const Token& t) {
    std::string_view name(t.text);
    name.remove_prefix(1);
    if (name.size() >= 2 && name.front() == '{' && name.back() == '}') {
        name = name.substr(1, name.size() - 2);
    }
    return to_lower(name);
}

/// Operand followed by something that binds tighter than `+` (or `-f`).
bool tight_after(const View& v, long j) {
    const Token* a = v.raw_after(j);
    if (a != nullptr) {
        if (a->is(TokenKind::MethodCall) || a->is_op("[") || a->is_op(".") || a->is_op("::")) {
            return true;
        }
    }
    if (v.valid(j + 1)) {
        const Token& n = v.s(j + 1);
        if (n.is(TokenKind::FormatOperator)) {
            return true;
        }
        if (n.is(TokenKind::Operator) &&
            (n.text == "*" || n.text == "/" || n.text == "%" || n.text == "," || n.text == "..")) {
            return true;
        }
    }
    return false;
}

bool chain_left_ok(const View& v, long j) {
    if (!v.valid(j - 1)) {
        return true;
    }
    const Token& p = v.s(j - 1);
    switch (p.kind) {
        case TokenKind::Newline:
        case TokenKind::Semicolon:
        case TokenKind::LParen:
        case TokenKind::LBrace:
        case TokenKind::Pipe:
            return true;
        case TokenKind::Operator:
            return p.text == "=" || p.text == "+=";
        default:
            return false;
    }
}

/// Can the literal replacing sig tokens [j, k] also absorb the
/// surrounding parentheses?  Returns the widened span if so.
Span unwrap_span(const View& v, long j, long k) {
    Span span{v.s(j).span.start, v.s(k).span.end};
    if (!v.valid(j - 1) || !v.valid(k + 1)) {
        return span;
    }
    const Token& lp = v.s(j - 1);
    const Token& rp = v.s(k + 1);
    if (!lp.is(TokenKind::LParen) || !rp.is(TokenKind::RParen) ||
        v.match[v.sig[static_cast<std::size_t>(j - 1)]] != static_cast<long>(v.sig[static_cast<std::size_t>(k + 1)])) {
        return span;
    }
    const Token* before = v.raw_before(j - 1);
    if (before != nullptr) {
        switch (before->kind) {
            case TokenKind::Whitespace: {
                if (v.valid(j - 2)) {
                    const Token& sb = v.s(j - 2);
                    switch (sb.kind) {
                        case TokenKind::Newline:
                        case TokenKind::Semicolon:
                        case TokenKind::LParen:
                        case TokenKind::LBrace:
                        case TokenKind::Pipe:
                        case TokenKind::FormatOperator:
                            break;
                        case TokenKind::Operator:
                            if (sb.text == "." || sb.text == "::" || sb.text == "$" || sb.text == "@" ||
                                sb.text == "]" || sb.text == "[") {
                                return span;
                            }
                            break;
                        case TokenKind::RParen: {
                            // Argument of an invoked name: `.('Invoke-Item') (...)`.
                            long open = v.match[v.sig[static_cast<std::size_t>(j - 2)]];
                            while (open > 0 && v.toks[static_cast<std::size_t>(open - 1)].is_trivia()) --open;
                            if (open <= 0) {
                                return span;
                            }
                            const Token& op = v.toks[static_cast<std::size_t>(open - 1)];
                            if (!op.is(TokenKind::CallOperator) && !op.is(TokenKind::DotSourceOperator)) {
                                return span;
                            }
                            break;
                        }
                        case TokenKind::Word:
                        case TokenKind::CmdletName: {
                            // `Start-`Process` tokenizes as pieces; a piece
                            // right after a backtick is not a keyword.
                            const Token* glued = v.raw_before(j - 2);
                            const bool fragment = glued != nullptr && glued->is(TokenKind::Backtick);
                            if (!fragment && is_keyword(sb.text)) {
                                return span;
                            }
                            break;
                        }
                        default:
                            return span;
                    }
                }
                break;
            }
            case TokenKind::Newline:
            case TokenKind::LParen:
            case TokenKind::Semicolon:
            case TokenKind::LBrace:
            case TokenKind::Pipe:
                break;
            case TokenKind::Operator:
                if (before->text != "=" && before->text != "," && before->text != "+" && before->text != "+=") {
                    return span;
                }
                break;
            default:
                return span;
        }
    }
    const Token* after = v.raw_after(k + 1);
    if (after != nullptr && (after->is(TokenKind::MethodCall) || after->is_op("[") || after->is_op(".") ||
                             after->is_op("::"))) {
        return span;
    }
    return Span{lp.span.start, rp.span.end};
}

std::string render(const std::string& value, bool all_double) {
    return all_double ? double_quoted_or_single(value) : single_quoted(value);
}

struct Candidate {
    std::string value;
    bool double_quoted = false;
    long var_sig = -1;
    Span removal;
    std::vector<long> uses;  // sig indexes
};

bool is_assign_op(const Token& t) {
    if (t.kind != TokenKind::Operator) {
        return false;
    }
    static constexpr std::string_view kOps[] = {"=", "+=", "-=", "*=", "/=", "%=", "++", "--"};
    return std::find(std::begin(kOps), std::end(kOps), t.text) != std::end(kOps);
}

std::map<std::string, Candidate> find_candidates(const View& v) {
    std::map<std::string, Candidate> cands;
    std::set<std::string> rejected;
    const long n = static_cast<long>(v.nsig());
    for (long j = 0; j < n; ++j) {
        const Token& t = v.s(j);
        if (!t.is(TokenKind::Variable)) {
            continue;
        }
        const std::string key = var_key(t);
        if (key.find(':') != std::string::npos || key == "_" || key == "$" || key == "?" || key == "^") {
            rejected.insert(key);
            continue;
        }
        const bool stmt_start = !v.valid(j - 1) || v.s(j - 1).is(TokenKind::Newline) ||
                                v.s(j - 1).is(TokenKind::Semicolon);
        const bool assigned = v.valid(j + 1) && is_assign_op(v.s(j + 1));
        if (!assigned) {
            continue;
        }
        const bool simple = stmt_start && v.depth[v.sig[static_cast<std::size_t>(j)]] == 0 &&
                            v.s(j + 1).text == "=" && v.valid(j + 2) && is_literal(v.s(j + 2)) &&
                            !is_here(v.s(j + 2)) &&
                            (!v.valid(j + 3) || v.s(j + 3).is(TokenKind::Newline) ||
                             v.s(j + 3).is(TokenKind::Semicolon));
        if (!simple || cands.count(key) != 0) {
            rejected.insert(key);
            continue;
        }
        Candidate c;
        c.value = *literal_value(v.s(j + 2));
        c.double_quoted = v.s(j + 2).is(TokenKind::StringLiteralDouble);
        c.var_sig = j;
        // Removal: the statement plus its terminator and trailing blanks.
        std::size_t ti = v.sig[static_cast<std::size_t>(j + 2)] + 1;
        std::size_t end = v.s(j + 2).span.end;
        while (ti < v.toks.size() && v.toks[ti].is(TokenKind::Whitespace)) {
            end = v.toks[ti].span.end;
            ++ti;
        }
        if (ti < v.toks.size() && (v.toks[ti].is(TokenKind::Semicolon) || v.toks[ti].is(TokenKind::Newline))) {
            const bool semi = v.toks[ti].is(TokenKind::Semicolon);
            end = v.toks[ti].span.end;
            ++ti;
            if (semi) {
                while (ti < v.toks.size() && v.toks[ti].is(TokenKind::Whitespace)) {
                    end = v.toks[ti].span.end;
                    ++ti;
                }
            }
        }
        c.removal = Span{t.span.start, end};
        cands.emplace(key, std::move(c));
    }
    for (const auto& r : rejected) {
        cands.erase(r);
    }
    // Uses, and disqualifiers: interpolation, use before assignment.
    for (long j = 0; j < n; ++j) {
        const Token& t = v.s(j);
        if (t.is(TokenKind::StringLiteralDouble)) {
            for (const auto& ev : t.embedded_vars) {
                cands.erase(to_lower(ev));
            }
            continue;
        }
        if (!t.is(TokenKind::Variable)) {
            continue;
        }
        auto it = cands.find(var_key(t));
        if (it == cands.end() || it->second.var_sig == j) {
            continue;
        }
        if (j < it->second.var_sig) {
            cands.erase(it);
            continue;
        }
        it->second.uses.push_back(j);
    }
    for (auto it = cands.begin(); it != cands.end();) {
        it = it->second.uses.empty() ? cands.erase(it) : std::next(it);
    }
    return cands;
}

struct Chain {
    long first;
    long last;
};

template <typename IsOperand>
std::vector<Chain> find_chains(const View& v, IsOperand is_operand) {
    std::vector<Chain> chains;
    const long n = static_cast<long>(v.nsig());
    long j = 0;
    while (j < n) {
        if (!is_operand(j) || !chain_left_ok(v, j) || tight_after(v, j)) {
            ++j;
            continue;
        }
        long k = j;
        while (v.valid(k + 2) && v.s(k + 1).is_op("+") && is_operand(k + 2) && !tight_after(v, k + 2)) {
            k += 2;
        }
        if (k > j) {
            chains.push_back({j, k});
            j = k + 1;
        } else {
            ++j;
        }
    }
    return chains;
}

}  // namespace

std::vector<Edit> concat_sites(const View& v) {
    auto cands = find_candidates(v);
    std::vector<Chain> chains;
    for (;;) {
        auto is_operand = [&](long j) {
            const Token& t = v.s(j);
            if (is_literal(t) && !is_here(t)) {
                return true;
            }
            return t.is(TokenKind::Variable) && cands.count(var_key(t)) != 0 &&
                   cands.at(var_key(t)).var_sig != j;
        };
        chains = find_chains(v, is_operand);
        std::set<long> in_chain;
        for (const auto& c : chains) {
            for (long j = c.first; j <= c.last; j += 2) {
                in_chain.insert(j);
            }
        }
        bool dropped = false;
        for (auto it = cands.begin(); it != cands.end();) {
            const bool all = std::all_of(it->second.uses.begin(), it->second.uses.end(),
                                         [&](long u) { return in_chain.count(u) != 0; });
            if (!all) {
                it = cands.erase(it);
                dropped = true;
            } else {
                ++it;
            }
        }
        if (!dropped) {
            break;
        }
    }
    std::vector<Edit> edits;
    for (const auto& c : chains) {
        std::string value;
        bool all_double = true;
        for (long j = c.first; j <= c.last; j += 2) {
            const Token& t = v.s(j);
            if (t.is(TokenKind::Variable)) {
                const auto& cand = cands.at(var_key(t));
                value += cand.value;
                all_double = all_double && cand.double_quoted;
            } else {
                value += *literal_value(t);
                all_double = all_double && t.is(TokenKind::StringLiteralDouble);
            }
        }
        edits.push_back({unwrap_span(v, c.first, c.last), render(value, all_double)});
    }
    for (const auto& [key, cand] : cands) {
        edits.push_back({cand.removal, ""});
    }
    return edits;
}

std::vector<Edit> reorder_sites(const View& v, std::vector<std::string>* warnings) {
    std::vector<Edit> edits;
    const long n = static_cast<long>(v.nsig());
    for (long j = 0; j + 2 < n; ++j) {
        const Token& fmt = v.s(j);
        if (!is_literal(fmt) || is_here(fmt) || !v.s(j + 1).is(TokenKind::FormatOperator)) {
            continue;
        }
        if (v.valid(j - 1)) {
            const Token& p = v.s(j - 1);
            if (p.is(TokenKind::FormatOperator) || p.is(TokenKind::MethodCall) ||
                (p.is(TokenKind::Operator) &&
                 (p.text == "," || p.text == "." || p.text == "::" || p.text == "]" ||
                  iequals(p.text, "-join") || iequals(p.text, "-split")))) {
                continue;
            }
        }
        {
            const Token* a = v.raw_after(j);
            if (a != nullptr && (a->is(TokenKind::MethodCall) || a->is_op("[") || a->is_op("."))) {
                continue;
            }
        }
        std::vector<std::string> args;
        bool all_double = fmt.is(TokenKind::StringLiteralDouble);
        long k = j + 2;
        bool ok = true;
        for (;;) {
            if (!v.valid(k) || !is_literal(v.s(k)) || is_here(v.s(k))) {
                ok = false;
                break;
            }
            const Token* a = v.raw_after(k);
            if (a != nullptr && (a->is(TokenKind::MethodCall) || a->is_op("[") || a->is_op(".") ||
                                 a->is_op("::"))) {
                ok = false;
                break;
            }
            if (v.valid(k + 1) && v.s(k + 1).is_op("..")) {
                ok = false;
                break;
            }
            args.push_back(*literal_value(v.s(k)));
            all_double = all_double && v.s(k).is(TokenKind::StringLiteralDouble);
            if (v.valid(k + 1) && v.s(k + 1).is_op(",")) {
                k += 2;
                continue;
            }
            break;
        }
        if (!ok) {
            continue;
        }
        const auto res = apply_format(*literal_value(fmt), args);
        if (!res.ok) {
            if (warnings != nullptr) {
                warnings->push_back("reorder: " + res.error + " in " + fmt.text + "; left unchanged");
            }
            continue;
        }
        edits.push_back({unwrap_span(v, j, k), render(res.value, all_double)});
        j = k;
    }
    return edits;
}

namespace {

bool tick_removable_bare(char next) {
    const auto u = static_cast<unsigned char>(next);
    return std::isalnum(u) != 0 || next == '-' || next == '_' || next == '.' || next == '`';
}

bool tick_kept_in_double(char next) {
    switch (next) {
        case '0': case 'a': case 'b': case 'f': case 'n': case 'r': case 't': case 'v':
        case '`': case '"': case '$': case 'e': case 'u':
            return true;
        default:
            return false;
    }
}

}  // namespace

std::vector<Edit> tick_sites(const View& v) {
    std::vector<Edit> edits;
    for (const auto& t : v.toks) {
        if (t.is(TokenKind::Backtick)) {
            const std::size_t e = t.span.end;
            if (e < v.src.size() && tick_removable_bare(v.src[e])) {
                edits.push_back({t.span, ""});
            }
        } else if (t.is(TokenKind::StringLiteralDouble) && !is_here(t)) {
            for (std::size_t i = 1; i + 1 < t.text.size(); ++i) {
                if (t.text[i] != '`') {
                    continue;
                }
                const char next = t.text[i + 1];
                if (!tick_kept_in_double(next) && next != '\n' && next != '\r') {
                    const std::size_t at = t.span.start + i;
                    edits.push_back({Span{at, at + 1}, ""});
                }
                ++i;
            }
        }
    }
    return edits;
}

std::vector<Edit> eval_sites(const View& v) {
    std::vector<Edit> edits;
    const long n = static_cast<long>(v.nsig());
    for (long j = 0; j + 3 < n; ++j) {
        const Token& op = v.s(j);
        if (!op.is(TokenKind::CallOperator) && !op.is(TokenKind::DotSourceOperator)) {
            continue;
        }
        if (!v.s(j + 1).is(TokenKind::LParen) || !is_literal(v.s(j + 2)) || !v.s(j + 3).is(TokenKind::RParen)) {
            continue;
        }
        const auto value = *literal_value(v.s(j + 2));
        if (!is_command_name(value)) {
            continue;
        }
        const std::size_t end = v.s(j + 3).span.end;
        std::string repl = value;
        if (end < v.src.size()) {
            const char c = v.src[end];
            if (c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != ';' && c != '|' && c != ')' &&
                c != '}') {
                repl.push_back(' ');
            }
        }
        edits.push_back({Span{op.span.start, end}, std::move(repl)});
        j += 3;
    }
    return edits;
}

namespace {

// Constant folder for the argument of an eval site: literals, `+`, `-f`
// with comma-separated arguments, and parentheses.
class Folder {
public:
    Folder(const View& v, long begin, long end) : v_(v), pos_(begin), end_(end) {}

    std::optional<std::string> run() {
        auto r = additive();
        if (!r || pos_ != end_) {
            return std::nullopt;
        }
        return r;
    }

private:
    const View& v_;
    long pos_;
    long end_;

    bool at_op(std::string_view op) const { return pos_ < end_ && v_.s(pos_).is_op(op); }

    std::optional<std::string> additive() {
        auto left = format();
        while (left && at_op("+")) {
            ++pos_;
            auto right = format();
            if (!right) {
                return std::nullopt;
            }
            *left += *right;
        }
        return left;
    }

    std::optional<std::string> format() {
        auto fmt = primary();
        if (!fmt || pos_ >= end_ || !v_.s(pos_).is(TokenKind::FormatOperator)) {
            return fmt;
        }
        ++pos_;
        std::vector<std::string> args;
        for (;;) {
            auto a = primary();
            if (!a) {
                return std::nullopt;
            }
            args.push_back(std::move(*a));
            if (!at_op(",")) {
                break;
            }
            ++pos_;
        }
        auto res = apply_format(*fmt, args);
        if (!res.ok) {
            return std::nullopt;
        }
        return res.value;
    }

    std::optional<std::string> primary() {
        if (pos_ >= end_) {
            return std::nullopt;
        }
        const Token& t = v_.s(pos_);
        if (is_literal(t)) {
            ++pos_;
            return literal_value(t);
        }
        if (t.is(TokenKind::LParen)) {
            const long close = v_.sig_of[static_cast<std::size_t>(v_.match[v_.sig[static_cast<std::size_t>(pos_)]])];
            if (close < 0 || close >= end_) {
                return std::nullopt;
            }
            Folder inner(v_, pos_ + 1, close);
            auto r = inner.run();
            pos_ = close + 1;
            return r;
        }
        return std::nullopt;
    }
};

}  // namespace

std::vector<Span> eval_evidence(const View& v) {
    std::vector<Span> out;
    const long n = static_cast<long>(v.nsig());
    for (long j = 0; j + 1 < n; ++j) {
        const Token& op = v.s(j);
        if (!op.is(TokenKind::CallOperator) && !op.is(TokenKind::DotSourceOperator)) {
            continue;
        }
        if (!v.s(j + 1).is(TokenKind::LParen)) {
            continue;
        }
        const long close_tok = v.match[v.sig[static_cast<std::size_t>(j + 1)]];
        if (close_tok < 0) {
            continue;
        }
        const long close = v.sig_of[static_cast<std::size_t>(close_tok)];
        Folder f(v, j + 2, close);
        auto value = f.run();
        if (value && is_command_name(*value)) {
            out.push_back(Span{op.span.start, v.s(close).span.end});
        }
    }
    return out;
}

std::vector<Edit> case_sites(const View& v) {
    std::vector<Edit> edits;
    for (const auto& t : v.toks) {
        if (!t.is(TokenKind::CmdletName)) {
            continue;
        }
        auto canon = canonical_cmdlet(t.text);
        if (canon && *canon != t.text) {
            edits.push_back({t.span, std::string(*canon)});
        }
    }
    return edits;
}

namespace {

template <typename F>
void for_inline_ws(const View& v, F f) {
    for (std::size_t i = 1; i + 1 < v.toks.size(); ++i) {
        const Token& t = v.toks[i];
        if (!t.is(TokenKind::Whitespace)) {
            continue;
        }
        const Token& prev = v.toks[i - 1];
        const Token& next = v.toks[i + 1];
        if (prev.is(TokenKind::Newline) || next.is(TokenKind::Newline) || next.is(TokenKind::Comment)) {
            continue;
        }
        f(t);
    }
}

}  // namespace

std::vector<Edit> ws_sites(const View& v) {
    std::vector<Edit> edits;
    for_inline_ws(v, [&](const Token& t) {
        if (t.text.size() >= 2) {
            edits.push_back({t.span, " "});
        }
    });
    return edits;
}

std::vector<Span> ws_evidence(const View& v) {
    std::vector<Span> out;
    for_inline_ws(v, [&](const Token& t) {
        if (t.text.size() >= 3) {
            out.push_back(t.span);
        }
    });
    return out;
}

}  // namespace psdeob::sdo
