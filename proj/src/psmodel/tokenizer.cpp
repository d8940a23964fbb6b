#include "psdeob/psmodel.hpp"

#include <array>
#include <cctype>

namespace psdeob {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\f' || c == '\v'; }

bool is_ident(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_word_delim(char c) {
    switch (c) {
        case ' ': case '\t': case '\f': case '\v': case '\n': case '\r':
        case '\'': case '"': case '$': case '`': case ';': case '|': case '&':
        case '(': case ')': case '{': case '}': case ',': case '=': case '[':
        case ']': case '+': case '<': case '>':
            return true;
        default:
            return false;
    }
}

constexpr std::string_view kDashOperators[] = {
    "join",    "split",    "isplit",   "csplit",  "replace",  "ireplace", "creplace",
    "eq",      "ieq",      "ceq",      "ne",      "ine",      "cne",      "gt",
    "igt",     "cgt",      "ge",       "ige",     "cge",      "lt",       "ilt",
    "clt",     "le",       "ile",      "cle",     "like",     "ilike",    "clike",
    "notlike", "match",    "imatch",   "cmatch",  "notmatch", "contains", "notcontains",
    "in",      "notin",    "and",      "or",      "xor",      "not",      "band",
    "bor",     "bxor",     "bnot",     "shl",     "shr",      "is",       "isnot",
    "as",      "icontains", "ccontains",
};

bool is_dash_operator(std::string_view name) {
    for (auto op : kDashOperators) {
        if (iequals(op, name)) {
            return true;
        }
    }
    return false;
}

bool looks_like_cmdlet(std::string_view w) {
    const auto dash = w.find('-');
    if (dash == std::string_view::npos || dash == 0 || dash + 1 >= w.size()) {
        return false;
    }
    for (std::size_t i = 0; i < dash; ++i) {
        if (!is_alpha(w[i])) {
            return false;
        }
    }
    if (!is_alpha(w[dash + 1])) {
        return false;
    }
    for (std::size_t i = dash + 1; i < w.size(); ++i) {
        if (!std::isalnum(static_cast<unsigned char>(w[i]))) {
            return false;
        }
    }
    return true;
}

class Lexer {
public:
    explicit Lexer(std::string_view s) : s_(s) {}

    std::vector<Token> run() {
        while (i_ < s_.size()) {
            step();
        }
        return std::move(out_);
    }

private:
    std::string_view s_;
    std::size_t i_ = 0;
    std::vector<Token> out_;

    char at(std::size_t k) const { return k < s_.size() ? s_[k] : '\0'; }

    void emit(TokenKind kind, std::size_t end) {
        Token t;
        t.kind = kind;
        t.text = std::string(s_.substr(i_, end - i_));
        t.span = {i_, end};
        out_.push_back(std::move(t));
        i_ = end;
    }

    const Token* prev() const { return out_.empty() ? nullptr : &out_.back(); }

    bool prev_adjacent_operand() const {
        const Token* p = prev();
        if (p == nullptr || p->span.end != i_) {
            return false;
        }
        switch (p->kind) {
            case TokenKind::RParen:
            case TokenKind::Variable:
            case TokenKind::StringLiteralSingle:
            case TokenKind::StringLiteralDouble:
            case TokenKind::Word:
            case TokenKind::CmdletName:
            case TokenKind::MethodCall:
            case TokenKind::Number:
                return true;
            case TokenKind::Operator:
                return p->text == "]";
            default:
                return false;
        }
    }

    std::size_t word_end(std::size_t k) const {
        while (k < s_.size() && !is_word_delim(s_[k]) && !(s_[k] == ':' && at(k + 1) == ':')) {
            ++k;
        }
        return k;
    }

    void emit_word(std::size_t end) {
        if (end == i_) {
            end = i_ + 1;
        }
        const auto text = s_.substr(i_, end - i_);
        emit(looks_like_cmdlet(text) ? TokenKind::CmdletName : TokenKind::Word, end);
    }

    [[noreturn]] void fail(std::string what, std::size_t offset) const {
        throw TokenizeError(std::move(what), offset);
    }

    std::size_t scan_single(std::size_t k) const {
        // k points at the opening quote
        const std::size_t start = k;
        ++k;
        while (k < s_.size()) {
            if (s_[k] == '\'') {
                if (at(k + 1) == '\'') {
                    k += 2;
                    continue;
                }
                return k + 1;
            }
            ++k;
        }
        fail("unterminated string", start);
    }

    // Skip a `$( ... )` body starting at the '(' at k; returns index after ')'.
    std::size_t scan_subexpr(std::size_t k, std::vector<std::string>* vars) const {
        const std::size_t start = k;
        int depth = 0;
        while (k < s_.size()) {
            const char c = s_[k];
            if (c == '(') {
                ++depth;
                ++k;
            } else if (c == ')') {
                --depth;
                ++k;
                if (depth == 0) {
                    return k;
                }
            } else if (c == '\'') {
                k = scan_single(k);
            } else if (c == '"') {
                k = scan_double(k, nullptr);
            } else if (c == '`') {
                k += 2;
            } else if (c == '$' && vars != nullptr && is_ident(at(k + 1))) {
                std::size_t e = k + 1;
                while (e < s_.size() && is_ident(s_[e])) ++e;
                if (at(e) == ':' && is_ident(at(e + 1))) {
                    ++e;
                    while (e < s_.size() && is_ident(s_[e])) ++e;
                }
                vars->emplace_back(s_.substr(k + 1, e - k - 1));
                k = e;
            } else {
                ++k;
            }
        }
        fail("unterminated subexpression", start);
    }

    // Read a `$` reference inside an expandable string. Returns the end.
    std::size_t scan_embedded_var(std::size_t k, std::vector<std::string>* vars) const {
        const char n = at(k + 1);
        if (n == '(') {
            if (vars != nullptr) vars->emplace_back("(");
            return scan_subexpr(k + 1, vars);
        }
        if (n == '{') {
            std::size_t e = k + 2;
            while (e < s_.size() && s_[e] != '}') ++e;
            if (e >= s_.size()) return k + 1;
            if (vars != nullptr) vars->emplace_back(s_.substr(k + 2, e - k - 2));
            return e + 1;
        }
        if (is_ident(n)) {
            std::size_t e = k + 1;
            while (e < s_.size() && is_ident(s_[e])) ++e;
            if (at(e) == ':' && is_ident(at(e + 1))) {
                ++e;
                while (e < s_.size() && is_ident(s_[e])) ++e;
            }
            if (vars != nullptr) vars->emplace_back(s_.substr(k + 1, e - k - 1));
            return e;
        }
        if (n == '$' || n == '?' || n == '^') {
            if (vars != nullptr) vars->emplace_back(std::string(1, n));
            return k + 2;
        }
        return k + 1;
    }

    std::size_t scan_double(std::size_t k, std::vector<std::string>* vars) const {
        const std::size_t start = k;
        ++k;
        while (k < s_.size()) {
            const char c = s_[k];
            if (c == '`') {
                k += 2;
            } else if (c == '"') {
                if (at(k + 1) == '"') {
                    k += 2;
                    continue;
                }
                return k + 1;
            } else if (c == '$') {
                k = scan_embedded_var(k, vars);
            } else {
                ++k;
            }
        }
        fail("unterminated string", start);
    }

    // Here-string opener `@'` / `@"` must be followed by a line break.
    bool here_string_opener(std::size_t k) const {
        std::size_t e = k + 2;
        while (e < s_.size() && is_space(s_[e])) ++e;
        return at(e) == '\n' || (at(e) == '\r' && at(e + 1) == '\n');
    }

    std::size_t scan_here(std::size_t k, char quote, std::vector<std::string>* vars) const {
        const std::string closer = std::string("\n") + quote + "@";
        const auto pos = s_.find(closer, k + 2);
        if (pos == std::string_view::npos) {
            fail("unterminated here-string", k);
        }
        if (quote == '"' && vars != nullptr) {
            for (std::size_t j = k + 2; j < pos;) {
                if (s_[j] == '`') {
                    j += 2;
                } else if (s_[j] == '$') {
                    j = scan_embedded_var(j, vars);
                } else {
                    ++j;
                }
            }
        }
        return pos + closer.size();
    }

    void lex_variable() {
        const char n = at(i_ + 1);
        if (n == '{') {
            std::size_t e = i_ + 2;
            while (e < s_.size() && s_[e] != '}') {
                e += s_[e] == '`' ? 2 : 1;
            }
            if (e >= s_.size()) {
                fail("unterminated variable name", i_);
            }
            emit(TokenKind::Variable, e + 1);
            return;
        }
        if (n == '(') {
            emit(TokenKind::Operator, i_ + 1);
            return;
        }
        if (is_ident(n)) {
            std::size_t e = i_ + 1;
            while (e < s_.size() && is_ident(s_[e])) ++e;
            if (at(e) == ':' && is_ident(at(e + 1))) {
                ++e;
                while (e < s_.size() && is_ident(s_[e])) ++e;
            }
            emit(TokenKind::Variable, e);
            return;
        }
        if (n == '$' || n == '?' || n == '^') {
            emit(TokenKind::Variable, i_ + 2);
            return;
        }
        emit(TokenKind::Word, i_ + 1);
    }

    void lex_number() {
        std::size_t e = i_;
        if (s_[e] == '0' && (at(e + 1) == 'x' || at(e + 1) == 'X') &&
            std::isxdigit(static_cast<unsigned char>(at(e + 2)))) {
            e += 2;
            while (e < s_.size() && std::isxdigit(static_cast<unsigned char>(s_[e]))) ++e;
        } else {
            while (e < s_.size() && is_digit(s_[e])) ++e;
            if (at(e) == '.' && is_digit(at(e + 1))) {
                ++e;
                while (e < s_.size() && is_digit(s_[e])) ++e;
            }
        }
        static constexpr std::string_view kSuffixes[] = {"kb", "mb", "gb", "tb", "pb"};
        for (auto suf : kSuffixes) {
            if (e + 2 <= s_.size() && iequals(s_.substr(e, 2), suf)) {
                e += 2;
                break;
            }
        }
        const char c = at(e);
        const bool ends = e >= s_.size() || is_word_delim(c) || (c == '.' && at(e + 1) == '.') ||
                          (c == ':' && at(e + 1) == ':');
        if (!ends) {
            emit_word(word_end(e));
            return;
        }
        emit(TokenKind::Number, e);
    }

    void lex_dash() {
        const char n = at(i_ + 1);
        if (is_alpha(n)) {
            std::size_t e = i_ + 1;
            while (e < s_.size() && is_ident(s_[e])) ++e;
            const auto name = s_.substr(i_ + 1, e - i_ - 1);
            if (iequals(name, "f")) {
                emit(TokenKind::FormatOperator, e);
            } else if (is_dash_operator(name)) {
                emit(TokenKind::Operator, e);
            } else {
                emit(TokenKind::Word, e);
            }
            return;
        }
        if (n == '-' || n == '=') {
            emit(TokenKind::Operator, i_ + 2);
            return;
        }
        emit(TokenKind::Operator, i_ + 1);
    }

    void lex_dot() {
        const char n = at(i_ + 1);
        if (n == '.') {
            emit(TokenKind::Operator, i_ + 2);
            return;
        }
        if (prev_adjacent_operand()) {
            if (is_alpha(n) || n == '_') {
                std::size_t e = i_ + 1;
                while (e < s_.size() && is_ident(s_[e])) ++e;
                emit(TokenKind::MethodCall, e);
                return;
            }
            if (n == '(' || n == '$' || n == '\'' || n == '"') {
                emit(TokenKind::Operator, i_ + 1);
                return;
            }
        }
        if (n == '(' || n == '\'' || n == '"' || n == '$' || n == '&' || n == '{' || n == '\0' ||
            is_space(n) || n == '\n' || n == '\r') {
            emit(TokenKind::DotSourceOperator, i_ + 1);
            return;
        }
        emit_word(word_end(i_ + 1));
    }

    void step() {
        const char c = s_[i_];
        const char n = at(i_ + 1);

        if (c == '\n') {
            emit(TokenKind::Newline, i_ + 1);
            return;
        }
        if (c == '\r' && n == '\n') {
            emit(TokenKind::Newline, i_ + 2);
            return;
        }
        if (is_space(c) || c == '\r') {
            std::size_t e = i_;
            while (e < s_.size() && (is_space(s_[e]) || (s_[e] == '\r' && at(e + 1) != '\n'))) ++e;
            emit(TokenKind::Whitespace, e);
            return;
        }
        if (c == '#') {
            std::size_t e = i_;
            while (e < s_.size() && s_[e] != '\n' && !(s_[e] == '\r' && at(e + 1) == '\n')) ++e;
            emit(TokenKind::Comment, e);
            return;
        }
        if (c == '<' && n == '#') {
            const auto pos = s_.find("#>", i_ + 2);
            if (pos == std::string_view::npos) {
                fail("unterminated block comment", i_);
            }
            emit(TokenKind::Comment, pos + 2);
            return;
        }
        if (c == '\'') {
            emit(TokenKind::StringLiteralSingle, scan_single(i_));
            return;
        }
        if (c == '"') {
            std::vector<std::string> vars;
            const std::size_t e = scan_double(i_, &vars);
            emit(TokenKind::StringLiteralDouble, e);
            out_.back().embedded_vars = std::move(vars);
            return;
        }
        if (c == '@') {
            if ((n == '\'' || n == '"') && here_string_opener(i_)) {
                std::vector<std::string> vars;
                const std::size_t e = scan_here(i_, n, &vars);
                emit(n == '\'' ? TokenKind::StringLiteralSingle : TokenKind::StringLiteralDouble, e);
                out_.back().embedded_vars = std::move(vars);
                return;
            }
            if (n == '(' || n == '{') {
                emit(TokenKind::Operator, i_ + 1);
                return;
            }
            emit_word(word_end(i_ + 1));
            return;
        }
        if (c == '$') {
            lex_variable();
            return;
        }
        if (c == '`') {
            emit(TokenKind::Backtick, i_ + 1);
            return;
        }
        switch (c) {
            case ';': emit(TokenKind::Semicolon, i_ + 1); return;
            case '(': emit(TokenKind::LParen, i_ + 1); return;
            case ')': emit(TokenKind::RParen, i_ + 1); return;
            case '{': emit(TokenKind::LBrace, i_ + 1); return;
            case '}': emit(TokenKind::RBrace, i_ + 1); return;
            case '[': case ']': case ',': case '!':
                emit(TokenKind::Operator, i_ + 1);
                return;
            case '|':
                emit(n == '|' ? TokenKind::Operator : TokenKind::Pipe, i_ + (n == '|' ? 2 : 1));
                return;
            case '&':
                emit(n == '&' ? TokenKind::Operator : TokenKind::CallOperator, i_ + (n == '&' ? 2 : 1));
                return;
            case '=':
                emit(TokenKind::Operator, i_ + (n == '=' ? 2 : 1));
                return;
            case '+':
                emit(TokenKind::Operator, i_ + ((n == '+' || n == '=') ? 2 : 1));
                return;
            case '>':
                emit(TokenKind::Operator, i_ + (n == '>' ? 2 : 1));
                return;
            case '<':
                emit(TokenKind::Operator, i_ + 1);
                return;
            case '-':
                lex_dash();
                return;
            case '.':
                lex_dot();
                return;
            default:
                break;
        }
        if (c == ':' && n == ':') {
            emit(TokenKind::Operator, i_ + 2);
            return;
        }
        if (c == '*' || c == '/' || c == '%') {
            if (n == '=') {
                emit(TokenKind::Operator, i_ + 2);
                return;
            }
            if (n == '\0' || is_space(n) || n == '\n' || n == '\r' || n == '(' || n == '$' ||
                n == '\'' || n == '"' || is_digit(n)) {
                emit(TokenKind::Operator, i_ + 1);
                return;
            }
        }
        if (is_digit(c)) {
            lex_number();
            return;
        }
        const Token* p = prev();
        if (p != nullptr && p->is_op("::") && p->span.end == i_ && is_ident(c)) {
            std::size_t e = i_;
            while (e < s_.size() && is_ident(s_[e])) ++e;
            emit(TokenKind::Word, e);
            return;
        }
        emit_word(word_end(i_));
    }
};

}  // namespace

std::vector<Token> tokenize(std::string_view content) { return Lexer(content).run(); }

std::vector<Token> tokenize(const ScriptText& script) { return tokenize(script.content); }

namespace {

std::string_view here_body(std::string_view text) {
    // text = @' <ws> NL body NL '@
    auto nl = text.find('\n');
    std::size_t start = nl + 1;
    std::size_t end = text.size() - 2;  // drop quote + @
    if (end > 0 && text[end - 1] == '\n') --end;
    if (end > 0 && text[end - 1] == '\r') --end;
    if (end < start) end = start;
    return text.substr(start, end - start);
}

}  // namespace

std::optional<std::string> literal_value(const Token& token) {
    if (token.kind == TokenKind::StringLiteralSingle) {
        if (!token.text.empty() && token.text.front() == '@') {
            return std::string(here_body(token.text));
        }
        std::string out;
        const std::string_view body = std::string_view(token.text).substr(1, token.text.size() - 2);
        for (std::size_t i = 0; i < body.size(); ++i) {
            out.push_back(body[i]);
            if (body[i] == '\'' && i + 1 < body.size() && body[i + 1] == '\'') {
                ++i;
            }
        }
        return out;
    }
    if (token.kind != TokenKind::StringLiteralDouble || !token.embedded_vars.empty()) {
        return std::nullopt;
    }
    const bool here = !token.text.empty() && token.text.front() == '@';
    const std::string_view body =
        here ? here_body(token.text) : std::string_view(token.text).substr(1, token.text.size() - 2);
    std::string out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        const char c = body[i];
        if (c == '`' && i + 1 < body.size()) {
            const char e = body[++i];
            switch (e) {
                case '0': out.push_back('\0'); break;
                case 'a': out.push_back('\a'); break;
                case 'b': out.push_back('\b'); break;
                case 'f': out.push_back('\f'); break;
                case 'n': out.push_back('\n'); break;
                case 'r': out.push_back('\r'); break;
                case 't': out.push_back('\t'); break;
                case 'v': out.push_back('\v'); break;
                default: out.push_back(e); break;
            }
        } else if (c == '"' && !here && i + 1 < body.size() && body[i + 1] == '"') {
            out.push_back('"');
            ++i;
        } else {
            out.push_back(c);
        }
    }
    return out;
}

std::string single_quoted(std::string_view value) {
    std::string out = "'";
    for (char c : value) {
        out.push_back(c);
        if (c == '\'') {
            out.push_back('\'');
        }
    }
    out.push_back('\'');
    return out;
}

std::string double_quoted_or_single(std::string_view value) {
    for (char c : value) {
        const auto u = static_cast<unsigned char>(c);
        if (c == '"' || c == '`' || c == '$' || (u < 0x20 && c != '\t')) {
            return single_quoted(value);
        }
    }
    return "\"" + std::string(value) + "\"";
}

bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i]))) {
            return false;
        }
    }
    return true;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

}  // namespace psdeob
