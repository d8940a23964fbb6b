#include "sandbox/ast.hpp"

#include <charconv>
#include <cmath>

namespace psdeob::sbx {

namespace {

struct PTok {
    const Token* t;
    bool space_before;
};

bool is_keyword_at_statement(std::string_view w) {
    static constexpr std::string_view kWords[] = {
        "if", "while", "do", "for", "foreach", "switch", "try", "trap", "function", "filter", "param",
        "return", "exit", "throw", "break", "continue", "begin", "process", "end", "class", "enum", "using",
    };
    for (auto k : kWords) {
        if (iequals(w, k)) {
            return true;
        }
    }
    return false;
}

bool is_assign_op(const Token& t) {
    if (t.kind != TokenKind::Operator) {
        return false;
    }
    return t.text == "=" || t.text == "+=" || t.text == "-=" || t.text == "*=" || t.text == "/=" || t.text == "%=";
}

bool is_comparison_op(std::string_view op) {
    std::string o = to_lower(op);
    if (o.size() < 2 || o[0] != '-') {
        return false;
    }
    o.erase(0, 1);
    static constexpr std::string_view kOps[] = {
        "eq", "ne", "gt", "ge", "lt", "le", "like", "notlike", "match", "notmatch", "replace", "split", "join",
        "contains", "notcontains", "in", "notin", "is", "isnot", "as", "band", "bor", "bxor", "shl", "shr",
    };
    for (auto k : kOps) {
        if (o == k) {
            return true;
        }
        if ((o.size() == k.size() + 1) && (o[0] == 'i' || o[0] == 'c') && o.substr(1) == k) {
            return true;
        }
    }
    return false;
}

double parse_number(std::string_view s) {
    std::string lower = to_lower(s);
    double mult = 1;
    static constexpr std::pair<std::string_view, double> kSuffix[] = {
        {"kb", 1024.0}, {"mb", 1048576.0}, {"gb", 1073741824.0}, {"tb", 1099511627776.0}, {"pb", 1125899906842624.0}};
    for (auto [suf, m] : kSuffix) {
        if (lower.size() > suf.size() && lower.ends_with(suf)) {
            lower.resize(lower.size() - suf.size());
            mult = m;
            break;
        }
    }
    if (!lower.empty() && (lower.back() == 'l' || lower.back() == 'd')) {
        if (!(lower.starts_with("0x") && lower.back() == 'd')) {
            lower.pop_back();
        }
    }
    if (lower.starts_with("0x")) {
        unsigned long long v = 0;
        std::from_chars(lower.data() + 2, lower.data() + lower.size(), v, 16);
        return static_cast<double>(v) * mult;
    }
    double v = 0;
    auto [p, ec] = std::from_chars(lower.data(), lower.data() + lower.size(), v);
    (void)p;
    if (ec != std::errc()) {
        return 0;
    }
    return v * mult;
}

std::string variable_name(std::string_view text) {
    std::string_view s = text;
    if (!s.empty() && s[0] == '$') {
        s.remove_prefix(1);
    }
    if (s.size() >= 2 && s.front() == '{' && s.back() == '}') {
        s = s.substr(1, s.size() - 2);
    }
    return std::string(s);
}

class Parser {
public:
    explicit Parser(std::string_view src) : src_(src), raw_(tokenize(src)) {
        bool space = false;
        for (const auto& t : raw_) {
            if (t.is(TokenKind::Whitespace) || t.is(TokenKind::Comment) || t.is(TokenKind::Backtick)) {
                space = true;
                continue;
            }
            toks_.push_back({&t, space});
            space = false;
        }
    }

    ParseResult run() {
        ParseResult r;
        r.block = parse_block(/*closer=*/nullptr);
        r.warnings = std::move(warnings_);
        return r;
    }

private:
    std::string_view src_;
    std::vector<Token> raw_;
    std::vector<PTok> toks_;
    std::size_t pos_ = 0;
    std::vector<std::string> warnings_;
    int no_comma_ = 0;

    // ---- token helpers ----------------------------------------------------
    bool at_end() const { return pos_ >= toks_.size(); }
    const Token* peek(std::size_t ahead = 0) const {
        return pos_ + ahead < toks_.size() ? toks_[pos_ + ahead].t : nullptr;
    }
    bool space_before(std::size_t ahead = 0) const {
        return pos_ + ahead < toks_.size() ? toks_[pos_ + ahead].space_before : true;
    }
    std::size_t offset() const { return at_end() ? src_.size() : toks_[pos_].t->span.start; }
    const Token& next() {
        if (at_end()) {
            throw ParseError("unexpected end of script", src_.size());
        }
        return *toks_[pos_++].t;
    }
    bool peek_is(TokenKind k) const { return peek() && peek()->is(k); }
    bool peek_op(std::string_view op) const { return peek() && peek()->is_op(op); }
    bool peek_word(std::string_view w) const { return peek() && peek()->is_word() && iequals(peek()->text, w); }
    void expect(TokenKind k, std::string_view what) {
        if (!peek_is(k)) {
            throw ParseError("expected " + std::string(what), offset());
        }
        ++pos_;
    }
    void expect_op(std::string_view op) {
        if (!peek_op(op)) {
            throw ParseError("expected '" + std::string(op) + "'", offset());
        }
        ++pos_;
    }
    void skip_newlines() {
        while (peek_is(TokenKind::Newline)) ++pos_;
    }
    bool at_terminator() const {
        const Token* t = peek();
        return !t || t->is(TokenKind::Newline) || t->is(TokenKind::Semicolon) || t->is(TokenKind::RParen) ||
               t->is(TokenKind::RBrace) || t->is(TokenKind::Pipe) || t->is_op("]") || t->is_op("&&") ||
               t->is_op("||");
    }

    NodePtr make(NK k, std::size_t start, std::string text = {}) {
        auto n = std::make_shared<Node>();
        n->k = k;
        n->text = std::move(text);
        n->span = Span{start, start};
        return n;
    }
    void finish(const NodePtr& n) {
        std::size_t end = n->span.start;
        if (pos_ > 0) {
            end = std::max(end, toks_[pos_ - 1].t->span.end);
        }
        n->span.end = end;
    }

    /// Skip to the end of the current statement, stepping over brackets.
    void recover() {
        int depth = 0;
        while (!at_end()) {
            const Token& t = *peek();
            if (depth == 0 && (t.is(TokenKind::Newline) || t.is(TokenKind::Semicolon))) {
                return;
            }
            if (t.is(TokenKind::LParen) || t.is(TokenKind::LBrace) || t.is_op("[")) {
                ++depth;
            } else if (t.is(TokenKind::RParen) || t.is(TokenKind::RBrace) || t.is_op("]")) {
                if (depth == 0) {
                    return;
                }
                --depth;
            }
            ++pos_;
        }
    }

    // ---- statements -------------------------------------------------------
    /// Statements until the closer token kind (or end of input when null).
    NodePtr parse_block(const TokenKind* closer) {
        auto block = make(NK::Block, offset());
        for (;;) {
            while (peek() && (peek()->is(TokenKind::Newline) || peek()->is(TokenKind::Semicolon) ||
                              peek()->is_op("&&") || peek()->is_op("||"))) {
                ++pos_;
            }
            if (at_end()) {
                if (closer) {
                    throw ParseError("missing closing bracket", src_.size());
                }
                break;
            }
            if (closer && peek_is(*closer)) {
                break;
            }
            if (!closer && (peek_is(TokenKind::RParen) || peek_is(TokenKind::RBrace) || peek_op("]"))) {
                warnings_.push_back("unexpected '" + peek()->text + "' at offset " + std::to_string(offset()));
                ++pos_;
                continue;
            }
            const std::size_t before = pos_;
            try {
                block->kids.push_back(parse_statement());
            } catch (const ParseError& e) {
                warnings_.push_back(std::string("unsupported syntax: ") + e.what() + " at offset " +
                                    std::to_string(e.offset));
                recover();
                if (pos_ == before) {
                    ++pos_;
                }
            }
        }
        finish(block);
        return block;
    }

    NodePtr parse_braced_block() {
        skip_newlines();
        expect(TokenKind::LBrace, "'{'");
        static constexpr TokenKind kClose = TokenKind::RBrace;
        auto b = parse_block(&kClose);
        expect(TokenKind::RBrace, "'}'");
        return b;
    }

    NodePtr parse_paren_condition() {
        skip_newlines();
        expect(TokenKind::LParen, "'('");
        skip_newlines();
        auto c = parse_pipeline_or_assignment();
        skip_newlines();
        expect(TokenKind::RParen, "')'");
        return c;
    }

    NodePtr parse_statement() {
        const Token& t = *peek();
        const std::size_t start = t.span.start;
        if (t.is_word() && is_keyword_at_statement(t.text)) {
            const std::string w = to_lower(t.text);
            if (w == "if") {
                ++pos_;
                auto n = make(NK::If, start);
                n->kids.push_back(parse_paren_condition());
                n->kids.push_back(parse_braced_block());
                for (;;) {
                    const std::size_t save = pos_;
                    skip_newlines();
                    if (peek_word("elseif")) {
                        ++pos_;
                        n->kids.push_back(parse_paren_condition());
                        n->kids.push_back(parse_braced_block());
                    } else if (peek_word("else")) {
                        ++pos_;
                        n->kids.push_back(parse_braced_block());
                        break;
                    } else {
                        pos_ = save;
                        break;
                    }
                }
                finish(n);
                return n;
            }
            if (w == "while") {
                ++pos_;
                auto n = make(NK::While, start);
                n->kids.push_back(parse_paren_condition());
                n->kids.push_back(parse_braced_block());
                finish(n);
                return n;
            }
            if (w == "do") {
                ++pos_;
                auto body = parse_braced_block();
                skip_newlines();
                NK kind = NK::DoWhile;
                if (peek_word("until")) {
                    kind = NK::DoUntil;
                } else if (!peek_word("while")) {
                    throw ParseError("expected while or until after do block", offset());
                }
                ++pos_;
                auto n = make(kind, start);
                n->kids.push_back(body);
                n->kids.push_back(parse_paren_condition());
                finish(n);
                return n;
            }
            if (w == "for") {
                ++pos_;
                auto n = make(NK::For, start);
                skip_newlines();
                expect(TokenKind::LParen, "'('");
                for (int part = 0; part < 3; ++part) {
                    skip_newlines();
                    const bool empty = part < 2 ? peek_is(TokenKind::Semicolon) : peek_is(TokenKind::RParen);
                    n->kids.push_back(empty ? make(NK::Nop, offset()) : parse_pipeline_or_assignment());
                    skip_newlines();
                    if (part < 2) {
                        expect(TokenKind::Semicolon, "';'");
                    }
                }
                expect(TokenKind::RParen, "')'");
                n->kids.push_back(parse_braced_block());
                finish(n);
                return n;
            }
            if (w == "foreach" && peek(1) && peek(1)->is(TokenKind::LParen)) {
                ++pos_;
                ++pos_;
                skip_newlines();
                if (!peek_is(TokenKind::Variable)) {
                    throw ParseError("expected loop variable", offset());
                }
                auto n = make(NK::Foreach, start, variable_name(next().text));
                if (!peek_word("in")) {
                    throw ParseError("expected 'in'", offset());
                }
                ++pos_;
                skip_newlines();
                n->kids.push_back(parse_pipeline_or_assignment());
                skip_newlines();
                expect(TokenKind::RParen, "')'");
                n->kids.push_back(parse_braced_block());
                finish(n);
                return n;
            }
            if (w == "try") {
                ++pos_;
                auto n = make(NK::Try, start);
                n->kids.push_back(parse_braced_block());
                NodePtr catch_body = make(NK::Nop, offset());
                NodePtr finally_body = make(NK::Nop, offset());
                for (;;) {
                    const std::size_t save = pos_;
                    skip_newlines();
                    if (peek_word("catch")) {
                        ++pos_;
                        while (peek_op("[") || peek_op(",")) {
                            if (peek_op(",")) {
                                ++pos_;
                                continue;
                            }
                            parse_type_name();
                        }
                        auto b = parse_braced_block();
                        if (catch_body->k == NK::Nop) {
                            catch_body = b;
                        }
                    } else if (peek_word("finally")) {
                        ++pos_;
                        finally_body = parse_braced_block();
                    } else {
                        pos_ = save;
                        break;
                    }
                }
                n->kids.push_back(catch_body);
                n->kids.push_back(finally_body);
                finish(n);
                return n;
            }
            if (w == "function" || w == "filter") {
                ++pos_;
                if (!peek() || !(peek()->is_word() || peek()->is(TokenKind::CmdletName))) {
                    throw ParseError("expected function name", offset());
                }
                auto n = make(NK::Function, start, next().text);
                if (peek_is(TokenKind::LParen)) {
                    auto params = parse_param_list();
                    n->names = params->names;
                    n->kids.push_back(params);
                }
                auto body = parse_braced_block();
                if (!body->kids.empty() && body->kids.front()->k == NK::ParamBlock) {
                    n->names = body->kids.front()->names;
                }
                n->kids.insert(n->kids.begin(), body);
                finish(n);
                return n;
            }
            if (w == "param") {
                ++pos_;
                return parse_param_list();
            }
            if (w == "return" || w == "exit" || w == "throw") {
                ++pos_;
                auto n = make(w == "return" ? NK::Return : w == "exit" ? NK::Exit : NK::Throw, start);
                if (!at_terminator()) {
                    n->kids.push_back(parse_pipeline_or_assignment());
                }
                finish(n);
                return n;
            }
            if (w == "break" || w == "continue") {
                ++pos_;
                auto n = make(w == "break" ? NK::Break : NK::Continue, start);
                if (peek() && peek()->is_word() && !at_terminator()) {
                    ++pos_;  // loop label
                }
                finish(n);
                return n;
            }
            if ((w == "begin" || w == "process" || w == "end") && peek(1) && peek(1)->is(TokenKind::LBrace)) {
                ++pos_;
                return parse_braced_block();
            }
            if (w == "switch" || w == "trap" || w == "class" || w == "enum" || w == "using") {
                ++pos_;
                warnings_.push_back("'" + w + "' statement not emulated at offset " + std::to_string(start));
                skip_construct();
                return make(NK::Nop, start);
            }
        }
        return parse_pipeline_or_assignment();
    }

    /// Skip a keyword construct: everything up to and including the first
    /// brace block, or to the statement end when there is none.
    void skip_construct() {
        while (!at_end() && !peek_is(TokenKind::Newline) && !peek_is(TokenKind::Semicolon)) {
            const Token& t = *peek();
            if (t.is(TokenKind::LParen) || t.is_op("[")) {
                skip_balanced();
                continue;
            }
            if (t.is(TokenKind::LBrace)) {
                skip_balanced();
                return;
            }
            if (t.is(TokenKind::RParen) || t.is(TokenKind::RBrace) || t.is_op("]")) {
                return;
            }
            ++pos_;
        }
    }

    void skip_balanced() {
        int depth = 0;
        do {
            const Token& t = next();
            if (t.is(TokenKind::LParen) || t.is(TokenKind::LBrace) || t.is_op("[")) {
                ++depth;
            } else if (t.is(TokenKind::RParen) || t.is(TokenKind::RBrace) || t.is_op("]")) {
                --depth;
            }
        } while (depth > 0 && !at_end());
    }

    /// `( [type]$a = default, $b )` -> ParamBlock with names and defaults.
    NodePtr parse_param_list() {
        auto n = make(NK::ParamBlock, offset());
        expect(TokenKind::LParen, "'('");
        for (;;) {
            skip_newlines();
            if (peek_is(TokenKind::RParen)) {
                ++pos_;
                break;
            }
            if (peek_op(",")) {
                ++pos_;
                continue;
            }
            if (peek_op("[")) {
                parse_type_name();  // type constraint or attribute
                continue;
            }
            if (peek_is(TokenKind::Variable)) {
                n->names.push_back(to_lower(variable_name(next().text)));
                NodePtr def = make(NK::Nop, offset());
                if (peek_op("=")) {
                    ++pos_;
                    ++no_comma_;
                    def = parse_expression();
                    --no_comma_;
                }
                n->kids.push_back(def);
                continue;
            }
            throw ParseError("unexpected token in parameter list", offset());
        }
        finish(n);
        return n;
    }

    NodePtr parse_pipeline_or_assignment() {
        const std::size_t start = offset();
        NodePtr first;
        const Token* t = peek();
        if (!t) {
            throw ParseError("expected statement", offset());
        }
        if (starts_command(*t)) {
            first = parse_command();
        } else {
            first = parse_expression();
            if (peek() && is_assign_op(*peek())) {
                const std::string op = next().text;
                if (!is_lvalue(*first)) {
                    throw ParseError("invalid assignment target", first->span.start);
                }
                skip_newlines();
                auto n = make(NK::Assign, start, op);
                n->kids.push_back(first);
                n->kids.push_back(parse_statement_value());
                finish(n);
                return n;
            }
        }
        if (!peek_is(TokenKind::Pipe)) {
            if (first->k == NK::Command) {
                auto p = make(NK::Pipeline, start);
                p->kids.push_back(first);
                finish(p);
                return p;
            }
            return first;
        }
        auto p = make(NK::Pipeline, start);
        p->kids.push_back(first);
        while (peek_is(TokenKind::Pipe)) {
            ++pos_;
            skip_newlines();
            p->kids.push_back(parse_command());
        }
        finish(p);
        return p;
    }

    /// Right-hand side of an assignment: a keyword statement or a pipeline.
    NodePtr parse_statement_value() {
        const Token* t = peek();
        if (t && t->is_word() && is_keyword_at_statement(t->text) &&
            !(iequals(t->text, "foreach") && !(peek(1) && peek(1)->is(TokenKind::LParen)))) {
            return parse_statement();
        }
        return parse_pipeline_or_assignment();
    }

    static bool is_lvalue(const Node& n) {
        switch (n.k) {
            case NK::Var:
            case NK::Index:
            case NK::Member:
                return true;
            case NK::Cast:
                return !n.kids.empty() && n.kids[0]->k == NK::Var;
            default:
                return false;
        }
    }

    bool starts_command(const Token& t) const {
        if (t.is(TokenKind::CallOperator) || t.is(TokenKind::DotSourceOperator)) {
            return true;
        }
        if (t.is(TokenKind::CmdletName)) {
            return true;
        }
        if (t.is(TokenKind::Word)) {
            return !t.text.empty() && t.text[0] != '-';
        }
        return false;
    }

    NodePtr parse_command() {
        const Token& t = *peek();
        const std::size_t start = t.span.start;
        auto cmd = make(NK::Command, start);
        if (t.is(TokenKind::CallOperator) || t.is(TokenKind::DotSourceOperator)) {
            cmd->text = t.text;
            ++pos_;
            cmd->kids.push_back(parse_command_argument());
        } else if (t.is_word() || t.is_op("%") || t.is_op("?")) {
            cmd->kids.push_back(make(NK::Bare, start, t.text));
            ++pos_;
        } else {
            throw ParseError("expected command", start);
        }
        while (!at_terminator()) {
            const Token& a = *peek();
            if (a.is_op(">") || a.is_op(">>")) {
                ++pos_;
                if (!at_terminator()) {
                    parse_command_argument();
                }
                continue;
            }
            if ((a.is(TokenKind::Word) || a.is(TokenKind::Operator) || a.is(TokenKind::FormatOperator)) &&
                a.text.size() > 1 && a.text[0] == '-' && (std::isalpha(static_cast<unsigned char>(a.text[1])) != 0)) {
                ++pos_;
                std::string name = to_lower(a.text.substr(1));
                auto param = make(NK::Param, a.span.start);
                if (!name.empty() && name.back() == ':') {
                    name.pop_back();
                    param->text = name;
                    param->kids.push_back(parse_command_argument());
                } else if (auto colon = name.find(':'); colon != std::string::npos) {
                    param->text = name.substr(0, colon);
                    auto v = make(NK::Bare, a.span.start, a.text.substr(colon + 2));
                    param->kids.push_back(v);
                } else {
                    param->text = name;
                }
                finish(param);
                cmd->kids.push_back(param);
                continue;
            }
            cmd->kids.push_back(parse_command_argument());
        }
        finish(cmd);
        return cmd;
    }

    /// One positional argument in command mode: a primary with postfix
    /// operators, optionally extended into an array by commas.
    NodePtr parse_command_argument() {
        const std::size_t start = offset();
        auto first = parse_postfix(parse_primary(/*command_mode=*/true));
        if (!peek_op(",")) {
            return first;
        }
        auto arr = make(NK::Array, start);
        arr->kids.push_back(first);
        while (peek_op(",")) {
            ++pos_;
            skip_newlines();
            arr->kids.push_back(parse_postfix(parse_primary(true)));
        }
        finish(arr);
        return arr;
    }

    // ---- expressions ------------------------------------------------------
    NodePtr parse_expression() { return parse_logical(); }

    NodePtr binary(const std::string& op, NodePtr l, NodePtr r) {
        auto n = make(NK::Binary, l->span.start, to_lower(op));
        n->kids.push_back(std::move(l));
        n->kids.push_back(std::move(r));
        finish(n);
        return n;
    }

    bool peek_dash_op(std::initializer_list<std::string_view> names) const {
        const Token* t = peek();
        if (!t || t->kind != TokenKind::Operator || t->text.size() < 2 || t->text[0] != '-') {
            return false;
        }
        std::string o = to_lower(t->text.substr(1));
        for (auto n : names) {
            if (o == n) {
                return true;
            }
        }
        return false;
    }

    NodePtr parse_logical() {
        auto l = parse_comparison();
        while (peek_dash_op({"and", "or", "xor"})) {
            const std::string op = next().text;
            skip_newlines();
            l = binary(op, l, parse_comparison());
        }
        return l;
    }

    NodePtr parse_comparison() {
        auto l = parse_additive();
        while (peek() && peek()->kind == TokenKind::Operator && is_comparison_op(peek()->text)) {
            const std::string op = next().text;
            skip_newlines();
            l = binary(op, l, parse_additive());
        }
        return l;
    }

    NodePtr parse_additive() {
        auto l = parse_multiplicative();
        while (peek_op("+") || peek_op("-")) {
            const std::string op = next().text;
            skip_newlines();
            l = binary(op, l, parse_multiplicative());
        }
        return l;
    }

    NodePtr parse_multiplicative() {
        auto l = parse_format();
        while (peek_op("*") || peek_op("/") || peek_op("%")) {
            const std::string op = next().text;
            skip_newlines();
            l = binary(op, l, parse_format());
        }
        return l;
    }

    NodePtr parse_format() {
        auto l = parse_range();
        while (peek_is(TokenKind::FormatOperator)) {
            ++pos_;
            skip_newlines();
            l = binary("-f", l, parse_range());
        }
        return l;
    }

    NodePtr parse_range() {
        auto l = parse_not();
        while (peek_op("..")) {
            ++pos_;
            l = binary("..", l, parse_not());
        }
        return l;
    }

    NodePtr parse_not() {
        if (peek_op("!") || peek_dash_op({"not"})) {
            const std::size_t start = offset();
            ++pos_;
            auto n = make(NK::Unary, start, "-not");
            n->kids.push_back(parse_not());
            finish(n);
            return n;
        }
        return parse_comma();
    }

    NodePtr parse_comma() {
        const std::size_t start = offset();
        auto first = parse_unary();
        if (no_comma_ > 0 || !peek_op(",")) {
            return first;
        }
        auto arr = make(NK::Array, start);
        arr->kids.push_back(first);
        while (peek_op(",")) {
            ++pos_;
            skip_newlines();
            arr->kids.push_back(parse_unary());
        }
        finish(arr);
        return arr;
    }

    NodePtr parse_unary() {
        const std::size_t start = offset();
        if (peek_op("-") || peek_op("+") || peek_op(",") || peek_dash_op({"bnot", "join", "split"})) {
            std::string op = to_lower(next().text);
            auto n = make(NK::Unary, start, op);
            n->kids.push_back(parse_unary());
            finish(n);
            return n;
        }
        if (peek_op("++") || peek_op("--")) {
            std::string op = next().text;
            auto n = make(NK::Unary, start, op);
            n->kids.push_back(parse_unary());
            finish(n);
            return n;
        }
        return parse_postfix(parse_primary(false));
    }

    /// Collect `[ ... ]` into a lowercase type name such as "char[]".
    std::string parse_type_name() {
        expect_op("[");
        std::string name;
        int depth = 1;
        while (!at_end()) {
            const Token& t = next();
            if (t.is_op("[")) {
                ++depth;
            } else if (t.is_op("]")) {
                if (--depth == 0) {
                    break;
                }
            }
            name += t.text;
        }
        // `[char[` + `]` leaves an unclosed inner bracket in the text.
        std::string lower = to_lower(name);
        if (lower.ends_with("[")) {
            lower += "]";
        }
        return lower;
    }

    bool starts_value(const Token& t) const {
        switch (t.kind) {
            case TokenKind::Variable:
            case TokenKind::StringLiteralSingle:
            case TokenKind::StringLiteralDouble:
            case TokenKind::Number:
            case TokenKind::LParen:
                return true;
            case TokenKind::Operator:
                return t.text == "[" || t.text == "$" || t.text == "@" || t.text == "-" || t.text == "+" ||
                       t.text == "!" || t.text == ",";
            default:
                return false;
        }
    }

    NodePtr parse_primary(bool command_mode) {
        if (at_end()) {
            throw ParseError("expected expression", src_.size());
        }
        const Token& t = *peek();
        const std::size_t start = t.span.start;
        switch (t.kind) {
            case TokenKind::StringLiteralSingle:
            case TokenKind::StringLiteralDouble: {
                ++pos_;
                if (auto v = literal_value(t)) {
                    auto n = make(NK::Str, start, *v);
                    finish(n);
                    return n;
                }
                auto n = make(NK::ExpandStr, start, t.text);
                finish(n);
                return n;
            }
            case TokenKind::Number: {
                ++pos_;
                auto n = make(NK::Num, start, t.text);
                n->num = parse_number(t.text);
                finish(n);
                return n;
            }
            case TokenKind::Variable: {
                ++pos_;
                auto n = make(NK::Var, start, variable_name(t.text));
                finish(n);
                return n;
            }
            case TokenKind::LParen: {
                ++pos_;
                const int saved = no_comma_;
                no_comma_ = 0;
                skip_newlines();
                auto n = make(NK::Paren, start);
                if (!peek_is(TokenKind::RParen)) {
                    n->kids.push_back(parse_statement_value());
                }
                skip_newlines();
                no_comma_ = saved;
                expect(TokenKind::RParen, "')'");
                finish(n);
                return n;
            }
            case TokenKind::LBrace:
                return parse_script_block();
            case TokenKind::Operator: {
                if (t.text == "$" || t.text == "@") {
                    ++pos_;
                    if (peek_is(TokenKind::LParen)) {
                        ++pos_;
                        const int saved = no_comma_;
                        no_comma_ = 0;
                        static constexpr TokenKind kClose = TokenKind::RParen;
                        auto body = parse_block(&kClose);
                        no_comma_ = saved;
                        expect(TokenKind::RParen, "')'");
                        auto n = make(t.text == "$" ? NK::SubExpr : NK::ArraySubExpr, start);
                        n->kids.push_back(body);
                        finish(n);
                        return n;
                    }
                    if (t.text == "@" && peek_is(TokenKind::LBrace)) {
                        return parse_hash(start);
                    }
                    throw ParseError("unexpected '" + t.text + "'", start);
                }
                if (t.text == "[") {
                    const std::string type = parse_type_name();
                    if (peek_op("::")) {
                        auto n = make(NK::Type, start, type);
                        finish(n);
                        return n;
                    }
                    if (!command_mode && peek() && (starts_value(*peek()) || peek_op("-"))) {
                        auto n = make(NK::Cast, start, type);
                        n->kids.push_back(parse_unary());
                        finish(n);
                        return n;
                    }
                    if (command_mode && peek() && !space_before() && starts_value(*peek())) {
                        auto n = make(NK::Cast, start, type);
                        n->kids.push_back(parse_postfix(parse_primary(true)));
                        finish(n);
                        return n;
                    }
                    auto n = make(NK::Type, start, type);
                    finish(n);
                    return n;
                }
                if (command_mode && (t.text == "-" || t.text == "+" || t.text == ",")) {
                    ++pos_;
                    auto n = make(NK::Unary, start, t.text);
                    n->kids.push_back(parse_postfix(parse_primary(true)));
                    finish(n);
                    return n;
                }
                if (command_mode || t.text == "%" || t.text == "*" || t.text == "/" || t.text == "?") {
                    ++pos_;
                    auto n = make(NK::Bare, start, t.text);
                    finish(n);
                    return n;
                }
                throw ParseError("unexpected '" + t.text + "'", start);
            }
            case TokenKind::Word:
            case TokenKind::CmdletName:
            case TokenKind::MethodCall: {
                ++pos_;
                auto n = make(NK::Bare, start, t.text);
                finish(n);
                return n;
            }
            default:
                throw ParseError("unexpected '" + t.text + "'", start);
        }
    }

    NodePtr parse_script_block() {
        const std::size_t start = offset();
        const std::size_t body_start = peek()->span.end;
        expect(TokenKind::LBrace, "'{'");
        const int saved = no_comma_;
        no_comma_ = 0;
        static constexpr TokenKind kClose = TokenKind::RBrace;
        auto body = parse_block(&kClose);
        no_comma_ = saved;
        const std::size_t body_end = peek() ? peek()->span.start : src_.size();
        expect(TokenKind::RBrace, "'}'");
        auto n = make(NK::ScriptBlock, start);
        if (!body->kids.empty() && body->kids.front()->k == NK::ParamBlock) {
            n->names = body->kids.front()->names;
        }
        n->kids.push_back(body);
        n->source = std::string(src_.substr(body_start, body_end - body_start));
        finish(n);
        return n;
    }

    NodePtr parse_hash(std::size_t start) {
        expect(TokenKind::LBrace, "'{'");
        auto n = make(NK::Hash, start);
        for (;;) {
            while (peek_is(TokenKind::Newline) || peek_is(TokenKind::Semicolon)) ++pos_;
            if (peek_is(TokenKind::RBrace)) {
                ++pos_;
                break;
            }
            if (at_end()) {
                throw ParseError("unterminated hash literal", start);
            }
            const Token& key = next();
            std::string k = key.text;
            if (key.is_string()) {
                k = literal_value(key).value_or(key.text);
            }
            expect_op("=");
            skip_newlines();
            n->kids.push_back(make(NK::Str, key.span.start, k));
            n->kids.push_back(parse_statement_value());
        }
        finish(n);
        return n;
    }

    NodePtr parse_call_args(NodePtr target) {
        expect(TokenKind::LParen, "'('");
        ++no_comma_;
        for (;;) {
            skip_newlines();
            if (peek_is(TokenKind::RParen)) {
                ++pos_;
                break;
            }
            if (peek_op(",")) {
                ++pos_;
                continue;
            }
            target->kids.push_back(parse_expression());
            skip_newlines();
            if (!peek_is(TokenKind::RParen) && !peek_op(",")) {
                --no_comma_;
                throw ParseError("expected ',' or ')' in argument list", offset());
            }
        }
        --no_comma_;
        finish(target);
        return target;
    }

    NodePtr parse_postfix(NodePtr base) {
        for (;;) {
            const Token* t = peek();
            if (!t) {
                return base;
            }
            if (t->is(TokenKind::MethodCall) && !space_before()) {
                ++pos_;
                const std::string name = t->text.substr(1);
                if (peek_is(TokenKind::LParen) && !space_before()) {
                    auto n = make(NK::Invoke, base->span.start, name);
                    n->kids.push_back(base);
                    base = parse_call_args(n);
                } else {
                    auto n = make(NK::Member, base->span.start, name);
                    n->kids.push_back(base);
                    finish(n);
                    base = n;
                }
                continue;
            }
            if (t->is_op("::")) {
                ++pos_;
                if (!peek() || !(peek()->is_word() || peek()->is(TokenKind::Number))) {
                    throw ParseError("expected member name after '::'", offset());
                }
                const std::string name = next().text;
                if (peek_is(TokenKind::LParen) && !space_before()) {
                    auto n = make(NK::Invoke, base->span.start, name);
                    n->is_static = true;
                    n->kids.push_back(base);
                    base = parse_call_args(n);
                } else {
                    auto n = make(NK::Member, base->span.start, name);
                    n->is_static = true;
                    n->kids.push_back(base);
                    finish(n);
                    base = n;
                }
                continue;
            }
            if (t->is_op("[") && !space_before()) {
                ++pos_;
                const int saved = no_comma_;
                no_comma_ = 0;
                skip_newlines();
                auto idx = parse_expression();
                skip_newlines();
                no_comma_ = saved;
                expect_op("]");
                auto n = make(NK::Index, base->span.start);
                n->kids.push_back(base);
                n->kids.push_back(idx);
                finish(n);
                base = n;
                continue;
            }
            if ((t->is_op("++") || t->is_op("--")) && !space_before()) {
                ++pos_;
                auto n = make(NK::Unary, base->span.start, "post" + t->text);
                n->kids.push_back(base);
                finish(n);
                base = n;
                continue;
            }
            return base;
        }
    }
};

}  // namespace

ParseResult parse_script(std::string_view source) {
    Parser p(source);
    return p.run();
}

}  // namespace psdeob::sbx
