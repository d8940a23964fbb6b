#include "sandbox/interpreter.hpp"

#include "psdeob/detector.hpp"
#include "psdeob/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

namespace psdeob {

std::string_view to_string(ActionKind kind) {
    switch (kind) {
        case ActionKind::Download: return "Download";
        case ActionKind::ProcStart: return "ProcStart";
        case ActionKind::ShellExec: return "ShellExec";
        case ActionKind::VarManip: return "VarManip";
        case ActionKind::ProcKill: return "ProcKill";
        case ActionKind::MemLoad: return "MemLoad";
    }
    return "Download";
}

std::string_view to_string(EnvUsage usage) {
    switch (usage) {
        case EnvUsage::PathBuild: return "PathBuild";
        case EnvUsage::ProcessArg: return "ProcessArg";
        case EnvUsage::Other: return "Other";
    }
    return "Other";
}

namespace sbx {

namespace {

constexpr int kMaxEvalDepth = 12;
constexpr std::size_t kMaxRange = 100000;
constexpr std::size_t kMaxString = 1u << 20;

struct AutoVar {
    std::string_view name;
    std::string_view value;
    bool numeric;
};

// Automatic variables as a default Windows PowerShell 5.1 host shows them.
// Obfuscators index into several of these to spell command names.
constexpr AutoVar kAutoVars[] = {
    {"ConfirmPreference", "High", false},
    {"ConsoleFileName", "", false},
    {"DebugPreference", "SilentlyContinue", false},
    {"ErrorActionPreference", "Continue", false},
    {"ErrorView", "NormalView", false},
    {"FormatEnumerationLimit", "4", true},
    {"HOME", "C:\\Users\\user", false},
    {"InformationPreference", "SilentlyContinue", false},
    {"MaximumAliasCount", "4096", true},
    {"MaximumDriveCount", "4096", true},
    {"MaximumErrorCount", "256", true},
    {"MaximumFunctionCount", "4096", true},
    {"MaximumHistoryCount", "4096", true},
    {"MaximumVariableCount", "4096", true},
    {"NestedPromptLevel", "0", true},
    {"OFS", " ", false},
    {"PID", "4242", true},
    {"ProgressPreference", "Continue", false},
    {"PSCulture", "en-US", false},
    {"PSEdition", "Desktop", false},
    {"PSHOME", "C:\\Windows\\System32\\WindowsPowerShell\\v1.0", false},
    {"PSSessionApplicationName", "wsman", false},
    {"PSSessionConfigurationName", "http://schemas.microsoft.com/powershell/Microsoft.PowerShell", false},
    {"PSUICulture", "en-US", false},
    {"PWD", "C:\\Users\\user", false},
    {"ShellId", "Microsoft.PowerShell", false},
    {"VerbosePreference", "SilentlyContinue", false},
    {"WarningPreference", "Continue", false},
    {"WhatIfPreference", "False", false},
};

// Environment variables whose concrete value obfuscators index into.
// Everything else reads as a `%NAME%` placeholder.
constexpr std::pair<std::string_view, std::string_view> kConcreteEnv[] = {
    {"COMSPEC", "C:\\Windows\\system32\\cmd.exe"},
    {"PUBLIC", "C:\\Users\\Public"},
    {"WINDIR", "C:\\Windows"},
    {"SYSTEMROOT", "C:\\Windows"},
};

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string strip_scope(const std::string& lower_name, bool& global) {
    global = false;
    static constexpr std::string_view kScopes[] = {"global:", "script:", "local:", "private:", "variable:"};
    for (auto s : kScopes) {
        if (lower_name.starts_with(s)) {
            global = s == "global:" || s == "script:";
            return lower_name.substr(s.size());
        }
    }
    return lower_name;
}

}  // namespace

std::string program_stem(std::string_view path) {
    std::string p(path);
    while (!p.empty() && (p.front() == '"' || p.front() == '\'' || p.front() == ' ')) p.erase(0, 1);
    while (!p.empty() && (p.back() == '"' || p.back() == '\'' || p.back() == ' ')) p.pop_back();
    const auto slash = p.find_last_of("\\/");
    if (slash != std::string::npos) {
        p = p.substr(slash + 1);
    }
    p = to_lower(p);
    if (p.ends_with(".exe")) {
        p.resize(p.size() - 4);
    }
    return p;
}

bool is_shell_program(std::string_view path) {
    const std::string s = program_stem(path);
    return s == "cmd" || s == "powershell" || s == "pwsh" || s == "wscript" || s == "cscript" || s == "mshta" ||
           s == "%comspec%" || s == "bash" || s == "sh";
}

const Value* Args::named_arg(std::initializer_list<std::string_view> names) const {
    for (const auto& [k, v] : named) {
        for (auto n : names) {
            if (k == n || (!k.empty() && k.size() >= 2 && n.starts_with(k))) {
                return &v;
            }
        }
    }
    return nullptr;
}

bool Args::has_switch(std::initializer_list<std::string_view> names) const { return named_arg(names) != nullptr; }

std::optional<Value> Args::get(std::initializer_list<std::string_view> names, std::size_t index) const {
    if (const Value* v = named_arg(names)) {
        return *v;
    }
    if (index < positional.size()) {
        return positional[index];
    }
    return std::nullopt;
}

std::vector<Value> Args::all_values() const {
    std::vector<Value> out = positional;
    for (const auto& [k, v] : named) {
        out.push_back(v);
    }
    return out;
}

Interpreter::Interpreter(int stage_index, std::size_t budget) : stage_index_(stage_index), budget_(budget) {
    scopes_.emplace_back();
}

void Interpreter::tick() {
    if (++result.steps > budget_) {
        throw BudgetSignal{};
    }
}

void Interpreter::warn(std::string message) {
    if (std::find(result.warnings.begin(), result.warnings.end(), message) == result.warnings.end()) {
        result.warnings.push_back(std::move(message));
    }
}

void Interpreter::add_action(ActionKind kind, std::string detail, bool resolved) {
    ActionRecord a;
    a.kind = kind;
    a.detail = std::move(detail);
    a.span = cur_span_;
    a.stage_index = stage_index_;
    a.resolved = resolved;
    result.actions.push_back(std::move(a));
}

void Interpreter::add_action(ActionKind kind, const Value& detail) {
    add_action(kind, to_str(detail), is_known(detail));
}

void Interpreter::run(const std::string& source) {
    auto parsed = parse_script(source);
    for (auto& w : parsed.warnings) {
        warn(std::move(w));
    }
    keep_alive_.push_back(parsed.block);
    std::vector<Value> out;
    try {
        exec_block(*parsed.block, out);
    } catch (const ExitSignal&) {
    } catch (const ReturnSignal&) {
    } catch (const BreakSignal&) {
    } catch (const ContinueSignal&) {
    } catch (const ThrowSignal& t) {
        warn("script threw: " + to_str(t.value));
    }
    settle(std::vector<const Value*>{});
}

void Interpreter::run_nested(const std::string& code) {
    if (depth_ >= kMaxEvalDepth) {
        warn("nested evaluation depth limit reached");
        return;
    }
    ParseResult parsed;
    try {
        parsed = parse_script(join_multiline(ScriptText::from_text(code)).content);
    } catch (const TokenizeError& e) {
        warn(std::string("evaluated code does not tokenize: ") + e.what());
        return;
    }
    for (auto& w : parsed.warnings) {
        warn(std::move(w));
    }
    keep_alive_.push_back(parsed.block);
    ++depth_;
    std::vector<Value> out;
    try {
        exec_block(*parsed.block, out);
    } catch (...) {
        --depth_;
        throw;
    }
    --depth_;
}

void Interpreter::do_eval(const Value& code) {
    InterceptedEval ev;
    ev.argument_text = code.is(Value::Kind::Block) ? code.block_source : to_str(code);
    ev.resolved = is_known(code) && !code.downloaded;
    ev.span = cur_span_;
    if (code.downloaded) {
        add_action(ActionKind::MemLoad, code.url.empty() ? std::string("<?>") : code.url, !code.url.empty());
    }
    if (ev.resolved) {
        const std::size_t first = ev.argument_text.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) {
            result.evals.push_back(std::move(ev));
            return;
        }
        try {
            const LayerFinding f = detect_layer(ScriptText::from_text(ev.argument_text));
            if (!f.layer.is_clean()) {
                ev.nested_layer = f.layer;
            }
        } catch (const TokenizeError&) {
            // Left to the nested run, which reports the tokenize failure.
        }
    }
    const bool run_inline = ev.resolved && !ev.nested_layer;
    const std::string text = ev.argument_text;
    result.evals.push_back(std::move(ev));
    if (run_inline) {
        run_nested(text);
    }
}

// ---- environment ------------------------------------------------------------

Value Interpreter::read_env(const std::string& name, Span span) {
    const std::string key = upper(name);
    Value v;
    if (auto it = env_overrides_.find(key); it != env_overrides_.end()) {
        v = it->second;
    } else {
        std::string text = "%" + key + "%";
        for (auto [n, concrete] : kConcreteEnv) {
            if (key == n) {
                text = std::string(concrete);
            }
        }
        v = Value::string(text);
    }
    v.env.insert(key);
    EnvVarUse use;
    use.name = key;
    use.span = depth_ == 0 ? span : cur_span_;
    if (process_arg_depth > 0) {
        use.usage = EnvUsage::ProcessArg;
        result.env_uses.push_back(std::move(use));
    } else {
        pending_env_.push_back(result.env_uses.size());
        pending_render_.push_back(to_str(v));
        result.env_uses.push_back(std::move(use));
    }
    return v;
}

void Interpreter::write_env(const std::string& name, const Value& v) {
    env_overrides_[upper(name)] = v;
}

void Interpreter::settle(const std::vector<const Value*>& values) {
    if (pending_env_.empty()) {
        return;
    }
    std::vector<std::string> rendered;
    rendered.reserve(values.size());
    for (const Value* v : values) {
        rendered.push_back(to_lower(to_str(*v)));
    }
    for (std::size_t i = 0; i < pending_env_.size(); ++i) {
        const std::string needle = to_lower(pending_render_[i]);
        bool path = false;
        for (const auto& r : rendered) {
            for (std::size_t at = r.find(needle); at != std::string::npos && !needle.empty();
                 at = r.find(needle, at + 1)) {
                const std::size_t after = at + needle.size();
                if (after < r.size() && (r[after] == '\\' || r[after] == '/')) {
                    path = true;
                }
            }
        }
        result.env_uses[pending_env_[i]].usage = path ? EnvUsage::PathBuild : EnvUsage::Other;
    }
    pending_env_.clear();
    pending_render_.clear();
}

// ---- variables --------------------------------------------------------------

Value Interpreter::lookup(const std::string& raw_name, Span span) {
    const std::string lower = to_lower(raw_name);
    if (lower.starts_with("env:")) {
        return read_env(raw_name.substr(4), span);
    }
    bool global = false;
    const std::string name = strip_scope(lower, global);
    if (name == "true") return Value::boolean(true);
    if (name == "false") return Value::boolean(false);
    if (name == "null") return Value::null();
    if (!global) {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            if (auto f = it->find(name); f != it->end()) {
                return f->second;
            }
        }
    } else if (auto f = scopes_.front().find(name); f != scopes_.front().end()) {
        return f->second;
    }
    for (const auto& av : kAutoVars) {
        if (to_lower(av.name) == name) {
            if (av.numeric) {
                return Value::number(std::stod(std::string(av.value)));
            }
            if (av.value == "False") {
                return Value::boolean(false);
            }
            return Value::string(std::string(av.value));
        }
    }
    if (name == "executioncontext") return Value::object(make_object("executioncontext"));
    if (name == "host") return Value::object(make_object("host"));
    if (name == "psversiontable") {
        auto o = make_object("hashtable");
        o->props["psversion"] = Value::string("5.1.19041.1");
        return Value::object(o);
    }
    if (name == "args" || name == "input") return Value::array({});
    return Value::unknown("$" + raw_name);
}

std::vector<std::pair<std::string, Value>> Interpreter::visible_variables() const {
    std::vector<std::pair<std::string, Value>> out;
    std::set<std::string> seen;
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
        for (const auto& [name, value] : *it) {
            if (seen.insert(name).second) {
                out.emplace_back(name, value);
            }
        }
    }
    for (const auto& av : kAutoVars) {
        const std::string lower = to_lower(av.name);
        if (seen.insert(lower).second) {
            Value v = av.numeric ? Value::number(std::stod(std::string(av.value))) : Value::string(std::string(av.value));
            if (av.value == "False") v = Value::boolean(false);
            out.emplace_back(std::string(av.name), std::move(v));
        }
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return to_lower(a.first) < to_lower(b.first); });
    return out;
}

void Interpreter::assign_var(const std::string& raw_name, Value v) {
    const std::string lower = to_lower(raw_name);
    if (lower.starts_with("env:")) {
        write_env(raw_name.substr(4), v);
        return;
    }
    bool global = false;
    const std::string name = strip_scope(lower, global);
    if (global) {
        scopes_.front()[name] = std::move(v);
    } else {
        scopes_.back()[name] = std::move(v);
    }
}

// ---- statements -------------------------------------------------------------

void Interpreter::exec_block(const Node& block, std::vector<Value>& out) {
    for (const auto& s : block.kids) {
        exec_stmt(*s, out);
    }
}

Value Interpreter::eval_condition(const Node& c, bool& known) {
    Value v = eval(c);
    settle(v);
    known = is_known(v) || v.is(Value::Kind::Object);
    return v;
}

void Interpreter::exec_stmt(const Node& s, std::vector<Value>& out) {
    tick();
    if (depth_ == 0) {
        cur_span_ = s.span;
    }
    try {
        switch (s.k) {
            case NK::Assign:
                exec_assign(s);
                return;
            case NK::If: {
                std::size_t i = 0;
                for (; i + 1 < s.kids.size(); i += 2) {
                    bool known = true;
                    const Value c = eval_condition(*s.kids[i], known);
                    if (!known || truthy(c)) {
                        exec_block(*s.kids[i + 1], out);
                        return;
                    }
                }
                if (i < s.kids.size()) {
                    exec_block(*s.kids[i], out);
                }
                return;
            }
            case NK::While:
            case NK::For: {
                const bool is_for = s.k == NK::For;
                if (is_for && s.kids[0]->k != NK::Nop) {
                    exec_stmt(*s.kids[0], out);
                }
                const Node& cond = is_for ? *s.kids[1] : *s.kids[0];
                const Node& body = is_for ? *s.kids[3] : *s.kids[1];
                for (;;) {
                    tick();
                    bool known = true;
                    bool once = false;
                    if (cond.k != NK::Nop) {
                        const Value c = eval_condition(cond, known);
                        if (known && !truthy(c)) {
                            break;
                        }
                        once = !known;
                    }
                    try {
                        exec_block(body, out);
                    } catch (const BreakSignal&) {
                        break;
                    } catch (const ContinueSignal&) {
                    }
                    if (once) {
                        break;
                    }
                    if (is_for && s.kids[2]->k != NK::Nop) {
                        std::vector<Value> ignored;
                        exec_stmt(*s.kids[2], ignored);
                    }
                }
                return;
            }
            case NK::DoWhile:
            case NK::DoUntil: {
                for (;;) {
                    tick();
                    try {
                        exec_block(*s.kids[0], out);
                    } catch (const BreakSignal&) {
                        break;
                    } catch (const ContinueSignal&) {
                    }
                    bool known = true;
                    const Value c = eval_condition(*s.kids[1], known);
                    if (!known) {
                        break;
                    }
                    const bool again = s.k == NK::DoWhile ? truthy(c) : !truthy(c);
                    if (!again) {
                        break;
                    }
                }
                return;
            }
            case NK::Foreach: {
                Value coll = eval(*s.kids[0]);
                settle(coll);
                for (const auto& item : enumerate(coll)) {
                    tick();
                    assign_var(s.text, item);
                    try {
                        exec_block(*s.kids[1], out);
                    } catch (const BreakSignal&) {
                        break;
                    } catch (const ContinueSignal&) {
                    }
                }
                return;
            }
            case NK::Try: {
                try {
                    exec_block(*s.kids[0], out);
                } catch (const ThrowSignal&) {
                    if (s.kids[1]->k == NK::Block) {
                        exec_block(*s.kids[1], out);
                    }
                }
                if (s.kids[2]->k == NK::Block) {
                    exec_block(*s.kids[2], out);
                }
                return;
            }
            case NK::Function: {
                auto keep = std::make_shared<Node>(s);
                functions_[to_lower(s.text)] = keep;
                return;
            }
            case NK::ParamBlock: {
                for (std::size_t i = 0; i < s.names.size(); ++i) {
                    if (scopes_.back().count(s.names[i]) == 0) {
                        const Node& def = *s.kids[i];
                        scopes_.back()[s.names[i]] = def.k == NK::Nop ? Value::null() : eval(def);
                    }
                }
                return;
            }
            case NK::Return: {
                Value v = s.kids.empty() ? Value::null() : eval(*s.kids[0]);
                settle(v);
                throw ReturnSignal{std::move(v)};
            }
            case NK::Break:
                throw BreakSignal{};
            case NK::Continue:
                throw ContinueSignal{};
            case NK::Exit:
                throw ExitSignal{};
            case NK::Throw: {
                Value v = s.kids.empty() ? Value::string("ScriptHalted") : eval(*s.kids[0]);
                throw ThrowSignal{std::move(v)};
            }
            case NK::Block:
                exec_block(s, out);
                return;
            case NK::Nop:
                return;
            case NK::Pipeline: {
                auto stream = run_pipeline(s);
                out.insert(out.end(), stream.begin(), stream.end());
                return;
            }
            case NK::Unary:
                if (s.text == "++" || s.text == "--" || s.text == "post++" || s.text == "post--") {
                    (void)eval(s);
                    return;
                }
                [[fallthrough]];
            default: {
                Value v = eval(s);
                settle(v);
                auto items = enumerate(v);
                out.insert(out.end(), items.begin(), items.end());
                return;
            }
        }
    } catch (const std::exception& e) {
        warn(std::string("emulation error: ") + e.what());
    }
}

void Interpreter::exec_assign(const Node& s) {
    const Node& target = *s.kids[0];
    Value rhs;
    {
        const Node& value = *s.kids[1];
        if (value.k == NK::Pipeline) {
            rhs = collapse(run_pipeline(value));
        } else if (value.k == NK::Assign) {
            exec_assign(value);
            rhs = eval(*value.kids[0]);
        } else if (value.k == NK::If || value.k == NK::Foreach || value.k == NK::While || value.k == NK::For ||
                   value.k == NK::Try || value.k == NK::DoWhile || value.k == NK::DoUntil) {
            std::vector<Value> out;
            exec_stmt(value, out);
            rhs = collapse(std::move(out));
        } else {
            rhs = eval(value);
        }
    }
    const Node* var_node = &target;
    std::string cast_type;
    if (target.k == NK::Cast) {
        cast_type = target.text;
        var_node = target.kids[0].get();
    }
    if (s.text != "=") {
        const std::string op = s.text.substr(0, 1);
        rhs = binary_op(op, eval(*var_node), rhs);
    }
    if (!cast_type.empty()) {
        rhs = cast(cast_type, rhs);
    }
    settle(rhs);
    switch (var_node->k) {
        case NK::Var: {
            const std::string lower = to_lower(var_node->text);
            if (lower.starts_with("env:")) {
                add_action(ActionKind::VarManip, upper(var_node->text.substr(4)));
            } else if (!rhs.env.empty()) {
                std::string names;
                for (const auto& n : rhs.env) {
                    names += (names.empty() ? "" : ",") + n;
                }
                add_action(ActionKind::VarManip, names);
            }
            assign_var(var_node->text, std::move(rhs));
            return;
        }
        case NK::Index: {
            if (var_node->kids[0]->k != NK::Var) {
                return;
            }
            Value base = eval(*var_node->kids[0]);
            const Value idx = eval(*var_node->kids[1]);
            if (base.is(Value::Kind::Array)) {
                if (auto n = to_number(idx)) {
                    long i = static_cast<long>(*n);
                    if (i < 0) i += static_cast<long>(base.items.size());
                    if (i >= 0 && static_cast<std::size_t>(i) < base.items.size()) {
                        base.items[static_cast<std::size_t>(i)] = rhs;
                        inherit(base, rhs);
                    }
                }
            } else if (base.is(Value::Kind::Object) && base.obj) {
                base.obj->props[to_lower(to_str(idx))] = rhs;
            }
            assign_var(var_node->kids[0]->text, std::move(base));
            return;
        }
        case NK::Member: {
            if (var_node->is_static) {
                return;  // e.g. [Net.ServicePointManager]::SecurityProtocol
            }
            Value base = eval(*var_node->kids[0]);
            if (base.is(Value::Kind::Object) && base.obj) {
                base.obj->props[to_lower(var_node->text)] = rhs;
            }
            return;
        }
        default:
            return;
    }
}

// ---- pipelines and commands -------------------------------------------------

std::vector<Value> Interpreter::run_pipeline(const Node& p) {
    std::vector<Value> stream;
    if (p.kids.empty()) {
        return stream;
    }
    const Node& first = *p.kids[0];
    if (first.k == NK::Command) {
        stream = run_command(first, nullptr);
    } else {
        Value v = eval(first);
        settle(v);
        stream = enumerate(v);
    }
    for (std::size_t i = 1; i < p.kids.size(); ++i) {
        stream = run_command(*p.kids[i], &stream);
    }
    return stream;
}

const std::map<std::string, std::string>& Interpreter::builtin_aliases() {
    static const std::map<std::string, std::string> kAliases = {
        {"iex", "invoke-expression"},     {"iwr", "invoke-webrequest"},   {"wget", "invoke-webrequest"},
        {"curl", "invoke-webrequest"},    {"irm", "invoke-restmethod"},   {"start", "start-process"},
        {"saps", "start-process"},        {"ii", "invoke-item"},          {"kill", "stop-process"},
        {"spps", "stop-process"},         {"%", "foreach-object"},        {"foreach", "foreach-object"},
        {"?", "where-object"},            {"where", "where-object"},      {"echo", "write-output"},
        {"write", "write-output"},        {"gv", "get-variable"},         {"gci", "get-childitem"},
        {"ls", "get-childitem"},          {"dir", "get-childitem"},       {"sleep", "start-sleep"},
        {"icm", "invoke-command"},        {"sal", "set-alias"},           {"sv", "set-variable"},
        {"set", "set-variable"},          {"select", "select-object"},    {"gi", "get-item"},
        {"sc", "set-content"},            {"gc", "get-content"},          {"cat", "get-content"},
        {"type", "get-content"},          {"ni", "new-item"},             {"sp", "set-itemproperty"},
        {"cd", "set-location"},           {"sl", "set-location"},         {"rm", "remove-item"},
        {"del", "remove-item"},           {"gps", "get-process"},         {"ps", "get-process"},
        {"gcm", "get-command"},           {"nal", "new-alias"},           {"nv", "new-variable"},
        {"sort", "sort-object"},          {"measure", "measure-object"},  {"ac", "add-content"},
        {"oh", "out-host"},               {"ipmo", "import-module"},      {"rv", "remove-variable"},
        {"gal", "get-alias"},             {"clv", "clear-variable"},      {"cls", "clear-host"},
        {"clear", "clear-host"},          {"pwd", "get-location"},        {"gl", "get-location"},
        {"copy", "copy-item"},            {"cp", "copy-item"},            {"move", "move-item"},
        {"mv", "move-item"},              {"rp", "remove-itemproperty"},  {"gp", "get-itemproperty"},
    };
    return kAliases;
}

std::string Interpreter::canonical_command(const std::string& lower) {
    const auto& kAliases = builtin_aliases();
    if (auto it = kAliases.find(lower); it != kAliases.end()) {
        return it->second;
    }
    return lower;
}

Args Interpreter::bind_args(const Node& cmd, std::size_t first_arg) {
    static constexpr std::string_view kSwitches[] = {
        "force", "recurse", "wait", "passthru", "usebasicparsing", "valueonly", "nonewwindow", "noprofile",
        "noninteractive", "nologo", "noexit", "asjob", "confirm", "whatif", "verbose", "debug", "unique",
        "raw", "leaf", "parent", "all", "append", "noclobber", "sta", "mta", "ascii", "nop", "noni",
        "simplematch", "casesensitive", "descending", "includeuserName", "asplaintext", "asstring",
    };
    Args a;
    for (std::size_t i = first_arg; i < cmd.kids.size(); ++i) {
        const Node& n = *cmd.kids[i];
        if (n.k == NK::Param) {
            if (!n.kids.empty()) {
                Value v = eval(*n.kids[0]);
                a.named.emplace_back(n.text, std::move(v));
                continue;
            }
            bool is_switch = false;
            for (auto sw : kSwitches) {
                if (n.text == sw) {
                    is_switch = true;
                }
            }
            const bool next_is_value = i + 1 < cmd.kids.size() && cmd.kids[i + 1]->k != NK::Param;
            if (!is_switch && next_is_value) {
                Value v = eval(*cmd.kids[++i]);
                a.named.emplace_back(n.text, std::move(v));
            } else {
                a.named.emplace_back(n.text, Value::boolean(true));
            }
            continue;
        }
        a.positional.push_back(eval(n));
    }
    return a;
}

std::vector<Value> Interpreter::run_command(const Node& cmd, const std::vector<Value>* input) {
    tick();
    const Node& name_node = *cmd.kids[0];
    std::string name;
    Value name_value;
    bool computed = false;
    if (name_node.k == NK::Bare && cmd.text.empty()) {
        name = name_node.text;
    } else {
        computed = true;
        name_value = eval(name_node);
        settle(name_value);
        if (name_value.is(Value::Kind::Block)) {
            Args a = bind_args(cmd, 1);
            std::vector<Value> args = a.positional;
            return call_block(name_value, args, input);
        }
        if (!is_known(name_value)) {
            warn("command name could not be resolved: " + to_str(name_value));
            Args a = bind_args(cmd, 1);
            return {Value::unknown()};
        }
        name = to_str(name_value);
        const auto a = name.find_first_not_of(" \t");
        const auto b = name.find_last_not_of(" \t");
        name = a == std::string::npos ? std::string() : name.substr(a, b - a + 1);
    }
    std::string lower = to_lower(name);
    if (auto it = user_aliases.find(lower); it != user_aliases.end()) {
        lower = to_lower(it->second);
    }
    if (auto it = functions_.find(lower); it != functions_.end()) {
        auto fn = it->second;
        Args a = bind_args(cmd, 1);
        return call_function(*fn, a, input);
    }
    std::string canonical = canonical_command(lower);
    const bool proc = is_process_command(canonical) || is_external_program(canonical);
    if (proc) ++process_arg_depth;
    Args args;
    try {
        args = bind_args(cmd, 1);
    } catch (...) {
        if (proc) --process_arg_depth;
        throw;
    }
    if (proc) --process_arg_depth;
    std::vector<const Value*> seen;
    for (const auto& v : args.positional) seen.push_back(&v);
    for (const auto& [k, v] : args.named) seen.push_back(&v);

    std::vector<Value> out;
    if (auto r = builtin_command(canonical, args, input, cmd.span)) {
        out = std::move(*r);
    } else if (auto r2 = builtin_command("get-" + canonical, args, input, cmd.span)) {
        out = std::move(*r2);
    } else if (is_external_program(canonical) || computed) {
        out = run_external(name, args, cmd.span);
    } else {
        warn("unknown command '" + name + "' skipped");
        out = {Value::unknown()};
    }
    for (const auto& v : out) seen.push_back(&v);
    settle(seen);
    return out;
}

std::vector<Value> Interpreter::call_function(const Node& fn, const Args& args, const std::vector<Value>* input) {
    tick();
    if (scopes_.size() > 64) {
        warn("call depth limit reached");
        return {};
    }
    scopes_.emplace_back();
    auto& scope = scopes_.back();
    std::vector<Value> rest;
    std::size_t pos = 0;
    std::vector<bool> bound(fn.names.size(), false);
    for (const auto& [k, v] : args.named) {
        bool hit = false;
        for (std::size_t i = 0; i < fn.names.size(); ++i) {
            if (fn.names[i] == k || fn.names[i].starts_with(k)) {
                scope[fn.names[i]] = v;
                bound[i] = true;
                hit = true;
                break;
            }
        }
        if (!hit) {
            rest.push_back(Value::string("-" + k));
        }
    }
    for (const auto& v : args.positional) {
        while (pos < fn.names.size() && bound[pos]) ++pos;
        if (pos < fn.names.size()) {
            scope[fn.names[pos]] = v;
            bound[pos] = true;
        } else {
            rest.push_back(v);
        }
    }
    scope["args"] = Value::array(rest);
    if (input) {
        scope["input"] = Value::array(*input);
        if (!input->empty()) {
            scope["_"] = input->back();
        }
    }
    // Defaults declared with function f($a = 1) { }.
    for (std::size_t k = 1; k < fn.kids.size(); ++k) {
        if (fn.kids[k]->k == NK::ParamBlock) {
            const Node& pb = *fn.kids[k];
            for (std::size_t i = 0; i < pb.names.size(); ++i) {
                if (!scope.count(pb.names[i])) {
                    scope[pb.names[i]] = pb.kids[i]->k == NK::Nop ? Value::null() : eval(*pb.kids[i]);
                }
            }
        }
    }
    std::vector<Value> out;
    try {
        exec_block(*fn.kids[0], out);
    } catch (ReturnSignal& r) {
        auto items = enumerate(r.value);
        out.insert(out.end(), items.begin(), items.end());
    } catch (...) {
        scopes_.pop_back();
        throw;
    }
    scopes_.pop_back();
    return out;
}

std::vector<Value> Interpreter::call_block(const Value& block, const std::vector<Value>& args,
                                           const std::vector<Value>* input) {
    if (!block.block) {
        // Created from a string: running it is an evaluation.
        do_eval(Value::string(block.block_source));
        return {};
    }
    Node fn;
    fn.k = NK::Function;
    fn.names = block.block->names;
    fn.kids.push_back(block.block->kids[0]);
    Args a;
    a.positional = args;
    return call_function(fn, a, input);
}

std::vector<Value> Interpreter::run_with_item(const Value& block, const Value& item) {
    tick();
    if (!block.block) {
        return {Value::unknown()};
    }
    auto& scope = scopes_.back();
    const auto had = scope.find("_");
    std::optional<Value> saved;
    if (had != scope.end()) {
        saved = had->second;
    }
    scope["_"] = item;
    scope["psitem"] = item;
    std::vector<Value> out;
    try {
        exec_block(*block.block->kids[0], out);
    } catch (ReturnSignal& r) {
        auto items = enumerate(r.value);
        out.insert(out.end(), items.begin(), items.end());
    } catch (const ContinueSignal&) {
    }
    if (saved) {
        scopes_.back()["_"] = *saved;
        scopes_.back()["psitem"] = *saved;
    } else {
        scopes_.back().erase("_");
        scopes_.back().erase("psitem");
    }
    return out;
}

// ---- expressions ------------------------------------------------------------

Value Interpreter::eval(const Node& e) {
    switch (e.k) {
        case NK::Str:
            return Value::string(e.text);
        case NK::ExpandStr:
            return expand_string(e.text, e.span);
        case NK::Num:
            return Value::number(e.num);
        case NK::Var:
            return lookup(e.text, e.span);
        case NK::Bare:
            return Value::string(e.text);
        case NK::Param:
            return Value::string("-" + e.text);
        case NK::Array: {
            std::vector<Value> items;
            items.reserve(e.kids.size());
            for (const auto& k : e.kids) {
                items.push_back(eval(*k));
            }
            return Value::array(std::move(items));
        }
        case NK::SubExpr:
        case NK::ArraySubExpr: {
            std::vector<Value> out;
            exec_block(*e.kids[0], out);
            if (e.k == NK::ArraySubExpr) {
                return Value::array(std::move(out));
            }
            return collapse(std::move(out));
        }
        case NK::Paren: {
            if (e.kids.empty()) {
                return Value::null();
            }
            const Node& inner = *e.kids[0];
            if (inner.k == NK::Assign) {
                exec_assign(inner);
                const Node* t = inner.kids[0].get();
                if (t->k == NK::Cast) t = t->kids[0].get();
                return eval(*t);
            }
            return eval(inner);
        }
        case NK::Pipeline:
        case NK::Command:
            return collapse(e.k == NK::Pipeline ? run_pipeline(e) : run_command(e, nullptr));
        case NK::ScriptBlock: {
            Value v;
            v.kind = Value::Kind::Block;
            v.block = std::make_shared<Node>(e);
            v.block_source = e.source;
            return v;
        }
        case NK::Hash: {
            auto o = make_object("hashtable");
            for (std::size_t i = 0; i + 1 < e.kids.size(); i += 2) {
                o->props[to_lower(e.kids[i]->text)] = eval(*e.kids[i + 1]);
            }
            return Value::object(o);
        }
        case NK::Type:
            return Value::type(normalize_type(e.text));
        case NK::Cast:
            return cast(normalize_type(e.text), eval(*e.kids[0]));
        case NK::Unary:
            return unary_op(e.text, *e.kids[0]);
        case NK::Binary: {
            const std::string& op = e.text;
            if (op == "-and" || op == "-or") {
                const Value l = eval(*e.kids[0]);
                if (is_known(l)) {
                    const bool lt = truthy(l);
                    if (op == "-and" && !lt) return Value::boolean(false);
                    if (op == "-or" && lt) return Value::boolean(true);
                }
                const Value r = eval(*e.kids[1]);
                if (!is_known(l) || !is_known(r)) return Value::unknown();
                return Value::boolean(truthy(r));
            }
            return binary_op(op, eval(*e.kids[0]), eval(*e.kids[1]));
        }
        case NK::Member: {
            if (e.is_static) {
                const Value base = eval(*e.kids[0]);
                return get_static(base.is(Value::Kind::Type) ? base.str : normalize_type(to_str(base)), e.text);
            }
            return get_member(eval(*e.kids[0]), e.text);
        }
        case NK::Invoke: {
            std::vector<Value> args;
            const bool proc_method = iequals(e.text, "Start") || iequals(e.text, "ShellExecute") ||
                                     iequals(e.text, "Run") || iequals(e.text, "Exec");
            if (e.is_static) {
                const Value base = eval(*e.kids[0]);
                const std::string type = base.is(Value::Kind::Type) ? base.str : normalize_type(to_str(base));
                if (proc_method) ++process_arg_depth;
                for (std::size_t i = 1; i < e.kids.size(); ++i) args.push_back(eval(*e.kids[i]));
                if (proc_method) --process_arg_depth;
                Value r = call_static(type, e.text, args, &e);
                std::vector<const Value*> seen{&r};
                for (const auto& a : args) seen.push_back(&a);
                settle(seen);
                return r;
            }
            Value target = eval(*e.kids[0]);
            if (proc_method) ++process_arg_depth;
            for (std::size_t i = 1; i < e.kids.size(); ++i) args.push_back(eval(*e.kids[i]));
            if (proc_method) --process_arg_depth;
            std::vector<Value> copy = args;
            Value r = call_method(std::move(target), e.text, std::move(args));
            std::vector<const Value*> seen{&r};
            for (const auto& a : copy) seen.push_back(&a);
            settle(seen);
            return r;
        }
        case NK::Index:
            return index_value(eval(*e.kids[0]), eval(*e.kids[1]));
        default: {
            std::vector<Value> out;
            exec_stmt(e, out);
            return collapse(std::move(out));
        }
    }
}

Value Interpreter::unary_op(const std::string& op, const Node& operand) {
    if (op == "++" || op == "--" || op == "post++" || op == "post--") {
        if (operand.k != NK::Var) {
            return Value::unknown();
        }
        const Value old = lookup(operand.text, operand.span);
        const auto n = to_number(old);
        Value next = n ? Value::number(*n + (op.ends_with("++") ? 1 : -1)) : Value::unknown();
        assign_var(operand.text, next);
        return op.starts_with("post") ? old : next;
    }
    Value v = eval(operand);
    Value r;
    if (op == "-not") {
        if (!is_known(v)) return Value::unknown();
        r = Value::boolean(!truthy(v));
    } else if (op == "-" || op == "+") {
        const auto n = to_number(v);
        if (!n || !is_known(v)) return Value::unknown();
        r = Value::number(op == "-" ? -*n : *n);
    } else if (op == ",") {
        r = Value::array({v});
    } else if (op == "-join") {
        r = binary_op("-join", v, Value::string(""));
    } else if (op == "-split") {
        if (!is_known(v)) return Value::unknown();
        std::vector<Value> parts;
        std::string cur;
        for (char c : to_str(v)) {
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                if (!cur.empty()) parts.push_back(Value::string(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) parts.push_back(Value::string(cur));
        r = Value::array(std::move(parts));
    } else if (op == "-bnot") {
        const auto n = to_number(v);
        if (!n) return Value::unknown();
        r = Value::number(static_cast<double>(~static_cast<long long>(*n)));
    } else {
        return Value::unknown();
    }
    inherit(r, v);
    return r;
}

Value Interpreter::index_value(const Value& base, const Value& idx) {
    if (!is_known(idx) || base.is(Value::Kind::Unknown)) {
        Value u = Value::unknown();
        inherit(u, base);
        return u;
    }
    auto one = [&](const Value& i) -> std::optional<Value> {
        if (base.is(Value::Kind::Object) && base.obj) {
            auto it = base.obj->props.find(to_lower(to_str(i)));
            if (it == base.obj->props.end()) return std::nullopt;
            return it->second;
        }
        const auto n = to_number(i);
        if (!n) return std::nullopt;
        long k = static_cast<long>(std::floor(*n));
        if (base.is(Value::Kind::String)) {
            const auto chars = utf8_chars(base.str);
            if (k < 0) k += static_cast<long>(chars.size());
            if (k < 0 || static_cast<std::size_t>(k) >= chars.size()) return std::nullopt;
            Value c = Value::string(chars[static_cast<std::size_t>(k)]);
            inherit(c, base);
            return c;
        }
        if (base.is(Value::Kind::Array)) {
            if (k < 0) k += static_cast<long>(base.items.size());
            if (k < 0 || static_cast<std::size_t>(k) >= base.items.size()) return std::nullopt;
            return base.items[static_cast<std::size_t>(k)];
        }
        if (base.is(Value::Kind::Bytes)) {
            if (k < 0) k += static_cast<long>(base.str.size());
            if (k < 0 || static_cast<std::size_t>(k) >= base.str.size()) return std::nullopt;
            return Value::number(static_cast<unsigned char>(base.str[static_cast<std::size_t>(k)]));
        }
        if (k == 0 && !base.is(Value::Kind::Null)) {
            return base;
        }
        return std::nullopt;
    };
    if (idx.is(Value::Kind::Array)) {
        std::vector<Value> out;
        for (const auto& i : idx.items) {
            if (auto v = one(i)) out.push_back(std::move(*v));
        }
        Value r = Value::array(std::move(out));
        inherit(r, base);
        return r;
    }
    if (auto v = one(idx)) {
        return *v;
    }
    return Value::null();
}

Value Interpreter::expand_string(const std::string& raw, Span span) {
    std::string_view inner = raw;
    if (inner.starts_with("@\"")) {
        const auto nl = inner.find('\n');
        const auto close = inner.rfind("\"@");
        if (nl == std::string_view::npos || close == std::string_view::npos || close < nl) {
            return Value::string(raw);
        }
        inner = inner.substr(nl + 1, close - nl - 1);
        if (inner.ends_with("\r\n")) {
            inner.remove_suffix(2);
        } else if (inner.ends_with("\n")) {
            inner.remove_suffix(1);
        }
    } else if (inner.size() >= 2) {
        inner = inner.substr(1, inner.size() - 2);
    }
    const bool here = raw.starts_with("@\"");
    std::string out;
    bool known = true;
    Value prov;
    auto append_value = [&](const Value& v) {
        if (!is_known(v)) known = false;
        inherit(prov, v);
        out += to_str(v);
    };
    auto is_name_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; };
    for (std::size_t i = 0; i < inner.size(); ++i) {
        const char c = inner[i];
        if (c == '`' && i + 1 < inner.size()) {
            const char n = inner[++i];
            switch (n) {
                case 'n': out += '\n'; break;
                case 'r': out += '\r'; break;
                case 't': out += '\t'; break;
                case '0': out += '\0'; break;
                case 'a': out += '\a'; break;
                case 'b': out += '\b'; break;
                case 'f': out += '\f'; break;
                case 'v': out += '\v'; break;
                case 'e': out += '\x1b'; break;
                default: out += n; break;
            }
            continue;
        }
        if (!here && c == '"' && i + 1 < inner.size() && inner[i + 1] == '"') {
            out += '"';
            ++i;
            continue;
        }
        if (c != '$' || i + 1 >= inner.size()) {
            out += c;
            continue;
        }
        const char n = inner[i + 1];
        if (n == '(') {
            int depth = 0;
            std::size_t j = i + 1;
            char quote = 0;
            for (; j < inner.size(); ++j) {
                const char d = inner[j];
                if (quote) {
                    if (d == quote) quote = 0;
                    continue;
                }
                if (d == '\'' || d == '"') {
                    quote = d;
                } else if (d == '(') {
                    ++depth;
                } else if (d == ')' && --depth == 0) {
                    break;
                }
            }
            if (j >= inner.size()) {
                out += inner.substr(i);
                break;
            }
            const std::string code(inner.substr(i + 2, j - i - 2));
            try {
                auto parsed = parse_script(code);
                keep_alive_.push_back(parsed.block);
                std::vector<Value> sub;
                exec_block(*parsed.block, sub);
                append_value(collapse(std::move(sub)));
            } catch (const TokenizeError&) {
                known = false;
                out += "<?>";
            }
            i = j;
            continue;
        }
        if (n == '{') {
            const auto close = inner.find('}', i + 2);
            if (close == std::string_view::npos) {
                out += c;
                continue;
            }
            append_value(lookup(std::string(inner.substr(i + 2, close - i - 2)), span));
            i = close;
            continue;
        }
        if (is_name_char(n) || n == '?' || n == '^' || n == '$') {
            std::size_t j = i + 1;
            if (n == '?' || n == '^' || n == '$') {
                j = i + 2;
            } else {
                while (j < inner.size() && is_name_char(inner[j])) ++j;
                if (j + 1 < inner.size() && inner[j] == ':' && is_name_char(inner[j + 1])) {
                    ++j;
                    while (j < inner.size() && is_name_char(inner[j])) ++j;
                }
            }
            append_value(lookup(std::string(inner.substr(i + 1, j - i - 1)), span));
            i = j - 1;
            continue;
        }
        out += c;
    }
    Value r = known ? Value::string(std::move(out)) : Value::unknown(std::move(out));
    inherit(r, prov);
    return r;
}

Value Interpreter::format_op(const Value& fmt_value, const Value& arg_value) {
    const std::vector<Value> args = enumerate(arg_value);
    const std::string fmt = to_str(fmt_value);
    bool known = is_known(fmt_value);
    std::string out;
    for (std::size_t i = 0; i < fmt.size(); ++i) {
        const char c = fmt[i];
        if (c == '{' && i + 1 < fmt.size() && fmt[i + 1] == '{') {
            out += '{';
            ++i;
            continue;
        }
        if (c == '}' && i + 1 < fmt.size() && fmt[i + 1] == '}') {
            out += '}';
            ++i;
            continue;
        }
        if (c == '}') {
            warn("format string has an unmatched '}'");
            return Value::unknown(fmt);
        }
        if (c != '{') {
            out += c;
            continue;
        }
        const auto close = fmt.find('}', i);
        if (close == std::string::npos) {
            warn("format string has an unterminated item");
            return Value::unknown(fmt);
        }
        std::string item = fmt.substr(i + 1, close - i - 1);
        std::string spec;
        if (auto colon = item.find(':'); colon != std::string::npos) {
            spec = item.substr(colon + 1);
            item.resize(colon);
        }
        long align = 0;
        if (auto comma = item.find(','); comma != std::string::npos) {
            try {
                align = std::stol(item.substr(comma + 1));
            } catch (const std::exception&) {
            }
            item.resize(comma);
        }
        std::size_t index = 0;
        try {
            std::size_t used = 0;
            index = std::stoul(item, &used);
            if (used != item.size()) throw std::invalid_argument("index");
        } catch (const std::exception&) {
            warn("format item '{" + item + "}' is not an index");
            return Value::unknown(fmt);
        }
        if (index >= args.size()) {
            warn("format index " + std::to_string(index) + " out of range");
            return Value::unknown(fmt);
        }
        const Value& a = args[index];
        if (!is_known(a)) known = false;
        std::string piece = to_str(a);
        if (!spec.empty() && (spec[0] == 'x' || spec[0] == 'X' || spec[0] == 'd' || spec[0] == 'D')) {
            if (auto n = to_number(a)) {
                const auto iv = static_cast<long long>(*n);
                char buf[64];
                const int width = spec.size() > 1 ? std::atoi(spec.c_str() + 1) : 0;
                if (spec[0] == 'x') std::snprintf(buf, sizeof buf, "%0*llx", width, iv);
                else if (spec[0] == 'X') std::snprintf(buf, sizeof buf, "%0*llX", width, iv);
                else std::snprintf(buf, sizeof buf, "%0*lld", width, iv);
                piece = buf;
            }
        }
        if (align > 0 && piece.size() < static_cast<std::size_t>(align)) {
            piece = std::string(static_cast<std::size_t>(align) - piece.size(), ' ') + piece;
        } else if (align < 0 && piece.size() < static_cast<std::size_t>(-align)) {
            piece += std::string(static_cast<std::size_t>(-align) - piece.size(), ' ');
        }
        out += piece;
        i = close;
    }
    Value r = known ? Value::string(std::move(out)) : Value::unknown(std::move(out));
    inherit(r, fmt_value);
    inherit(r, arg_value);
    return r;
}

namespace {

std::regex make_regex(const std::string& pattern, bool icase) {
    auto flags = std::regex::ECMAScript;
    if (icase) flags |= std::regex::icase;
    return std::regex(pattern, flags);
}

int compare_values(const Value& l, const Value& r, bool icase) {
    if (l.is(Value::Kind::Number) || l.is(Value::Kind::Bool)) {
        const auto a = to_number(l);
        const auto b = to_number(r);
        if (a && b) {
            return *a < *b ? -1 : (*a > *b ? 1 : 0);
        }
    }
    std::string a = to_str(l);
    std::string b = to_str(r);
    if (icase) {
        a = to_lower(a);
        b = to_lower(b);
    }
    return a < b ? -1 : (a > b ? 1 : 0);
}

}  // namespace

Value Interpreter::binary_op(const std::string& raw_op, const Value& l, const Value& r) {
    std::string op = to_lower(raw_op);
    bool icase = true;
    if (op.size() > 2 && op[0] == '-' && (op[1] == 'c' || op[1] == 'i')) {
        static constexpr std::string_view kBase[] = {"eq", "ne", "gt", "ge", "lt", "le", "like", "notlike",
                                                     "match", "notmatch", "replace", "split", "contains",
                                                     "notcontains", "in", "notin"};
        const std::string rest = op.substr(2);
        for (auto b : kBase) {
            if (rest == b) {
                icase = op[1] == 'i';
                op = "-" + rest;
                break;
            }
        }
    }
    auto tag = [&](Value v) {
        inherit(v, l);
        inherit(v, r);
        return v;
    };
    const bool known = is_known(l) && is_known(r);
    if (op == "+") {
        if (l.is(Value::Kind::Array)) {
            std::vector<Value> items = l.items;
            for (auto& it : enumerate(r)) items.push_back(std::move(it));
            return tag(Value::array(std::move(items)));
        }
        if (l.is(Value::Kind::Null)) {
            return r;
        }
        if (l.is(Value::Kind::String) || l.is(Value::Kind::Unknown) || !known) {
            std::string s = to_str(l) + to_str(r);
            if (s.size() > kMaxString) {
                return tag(Value::unknown());
            }
            return tag(known ? Value::string(std::move(s)) : Value::unknown(std::move(s)));
        }
        const auto a = to_number(l);
        const auto b = to_number(r);
        if (a && b) {
            return tag(Value::number(*a + *b));
        }
        return tag(Value::unknown(to_str(l) + to_str(r)));
    }
    if (!known && op != "-join" && op != "-f") {
        return tag(Value::unknown());
    }
    if (op == "-" || op == "/" || op == "%") {
        const auto a = to_number(l);
        const auto b = to_number(r);
        if (!a || !b) return tag(Value::unknown());
        if (op == "-") return tag(Value::number(*a - *b));
        if (*b == 0) return tag(Value::unknown());
        if (op == "/") return tag(Value::number(*a / *b));
        return tag(Value::number(std::fmod(*a, *b)));
    }
    if (op == "*") {
        const auto b = to_number(r);
        if (l.is(Value::Kind::String) && b) {
            const auto n = static_cast<std::size_t>(std::max(0.0, *b));
            if (n * l.str.size() > kMaxString) return tag(Value::unknown());
            std::string s;
            for (std::size_t i = 0; i < n; ++i) s += l.str;
            return tag(Value::string(std::move(s)));
        }
        if (l.is(Value::Kind::Array) && b) {
            const auto n = static_cast<std::size_t>(std::max(0.0, *b));
            if (n * l.items.size() > kMaxRange) return tag(Value::unknown());
            std::vector<Value> items;
            for (std::size_t i = 0; i < n; ++i) items.insert(items.end(), l.items.begin(), l.items.end());
            return tag(Value::array(std::move(items)));
        }
        const auto a = to_number(l);
        if (!a || !b) return tag(Value::unknown());
        return tag(Value::number(*a * *b));
    }
    if (op == "-f") {
        return format_op(l, r);
    }
    if (op == "-join") {
        const std::string sep = to_str(r);
        std::string s;
        bool first = true;
        bool all_known = is_known(r);
        for (const auto& it : enumerate(l)) {
            if (!first) s += sep;
            first = false;
            if (!is_known(it)) all_known = false;
            s += to_str(it);
        }
        if (l.is(Value::Kind::Unknown)) all_known = false;
        return tag(all_known ? Value::string(std::move(s)) : Value::unknown(std::move(s)));
    }
    if (op == "..") {
        const auto a = to_number(l);
        const auto b = to_number(r);
        if (!a || !b) return tag(Value::unknown());
        const long from = static_cast<long>(*a);
        const long to = static_cast<long>(*b);
        if (static_cast<std::size_t>(std::labs(to - from)) >= kMaxRange) return tag(Value::unknown());
        std::vector<Value> items;
        const long step = from <= to ? 1 : -1;
        for (long i = from;; i += step) {
            items.push_back(Value::number(static_cast<double>(i)));
            if (i == to) break;
        }
        return tag(Value::array(std::move(items)));
    }
    if (op == "-split") {
        std::string pattern;
        long limit = 0;
        if (r.is(Value::Kind::Array) && !r.items.empty()) {
            pattern = to_str(r.items[0]);
            if (r.items.size() > 1) {
                if (auto n = to_number(r.items[1])) limit = static_cast<long>(*n);
            }
        } else {
            pattern = to_str(r);
        }
        std::vector<Value> parts;
        const std::regex re = make_regex(pattern, icase);
        for (const auto& item : enumerate(l)) {
            const std::string s = to_str(item);
            std::size_t start = 0;
            long count = 1;
            for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
                if (limit > 0 && count >= limit) break;
                if (it->length(0) == 0) continue;
                const auto at = static_cast<std::size_t>(it->position(0));
                parts.push_back(Value::string(s.substr(start, at - start)));
                start = at + static_cast<std::size_t>(it->length(0));
                ++count;
            }
            parts.push_back(Value::string(s.substr(start)));
        }
        return tag(Value::array(std::move(parts)));
    }
    if (op == "-replace") {
        std::string pattern;
        std::string replacement;
        if (r.is(Value::Kind::Array) && !r.items.empty()) {
            pattern = to_str(r.items[0]);
            if (r.items.size() > 1) replacement = to_str(r.items[1]);
        } else {
            pattern = to_str(r);
        }
        const std::regex re = make_regex(pattern, icase);
        std::vector<Value> outs;
        for (const auto& item : enumerate(l)) {
            outs.push_back(Value::string(std::regex_replace(to_str(item), re, replacement)));
        }
        if (!l.is(Value::Kind::Array)) {
            return tag(outs.empty() ? Value::string("") : outs[0]);
        }
        return tag(Value::array(std::move(outs)));
    }
    auto scalar_test = [&](const Value& item) -> bool {
        if (op == "-eq") return compare_values(item, r, icase) == 0;
        if (op == "-ne") return compare_values(item, r, icase) != 0;
        if (op == "-gt") return compare_values(item, r, icase) > 0;
        if (op == "-ge") return compare_values(item, r, icase) >= 0;
        if (op == "-lt") return compare_values(item, r, icase) < 0;
        if (op == "-le") return compare_values(item, r, icase) <= 0;
        if (op == "-like") return wildcard_match(to_str(r), to_str(item));
        if (op == "-notlike") return !wildcard_match(to_str(r), to_str(item));
        if (op == "-match") return std::regex_search(to_str(item), make_regex(to_str(r), icase));
        if (op == "-notmatch") return !std::regex_search(to_str(item), make_regex(to_str(r), icase));
        return false;
    };
    static constexpr std::string_view kScalarOps[] = {"-eq", "-ne", "-gt", "-ge", "-lt", "-le",
                                                      "-like", "-notlike", "-match", "-notmatch"};
    for (auto so : kScalarOps) {
        if (op == so) {
            if (l.is(Value::Kind::Array)) {
                std::vector<Value> hits;
                for (const auto& it : l.items) {
                    if (scalar_test(it)) hits.push_back(it);
                }
                return tag(Value::array(std::move(hits)));
            }
            return tag(Value::boolean(scalar_test(l)));
        }
    }
    if (op == "-contains" || op == "-notcontains" || op == "-in" || op == "-notin") {
        const bool in_form = op == "-in" || op == "-notin";
        const Value& coll = in_form ? r : l;
        const Value& needle = in_form ? l : r;
        bool found = false;
        for (const auto& it : enumerate(coll)) {
            if (compare_values(it, needle, icase) == 0) found = true;
        }
        const bool negate = op == "-notcontains" || op == "-notin";
        return tag(Value::boolean(negate ? !found : found));
    }
    if (op == "-xor") {
        return tag(Value::boolean(truthy(l) != truthy(r)));
    }
    if (op == "-band" || op == "-bor" || op == "-bxor" || op == "-shl" || op == "-shr") {
        const auto a = to_number(l);
        const auto b = to_number(r);
        if (!a || !b) return tag(Value::unknown());
        const auto x = static_cast<long long>(*a);
        const auto y = static_cast<long long>(*b);
        long long v = 0;
        if (op == "-band") v = x & y;
        else if (op == "-bor") v = x | y;
        else if (op == "-bxor") v = x ^ y;
        else if (op == "-shl") v = (y >= 0 && y < 63) ? x << y : 0;
        else v = (y >= 0 && y < 63) ? x >> y : 0;
        return tag(Value::number(static_cast<double>(v)));
    }
    if (op == "-as") {
        return cast(normalize_type(to_str(r)), l);
    }
    if (op == "-is" || op == "-isnot") {
        return tag(Value::unknown());
    }
    warn("operator " + raw_op + " not emulated");
    return tag(Value::unknown());
}

}  // namespace sbx

EmulationResult emulate(const ScriptText& script, const FetchPolicy& policy, int stage_index, std::size_t step_budget) {
    (void)policy;  // emulation never performs I/O; callers fetch recorded downloads
    sbx::Interpreter interp(stage_index, step_budget);
    try {
        interp.run(script.content);
    } catch (const sbx::BudgetSignal&) {
        throw EmulationBudgetExceeded(step_budget, std::move(interp.result));
    } catch (const TokenizeError& e) {
        interp.result.warnings.push_back(std::string("script does not tokenize: ") + e.what());
    }
    return std::move(interp.result);
}

}  // namespace psdeob
