// Intercepted cmdlets, external programs, .NET constructors, methods,
// static members and casts. Anything with an effect on the host is
// recorded as an action and never performed.

#include "sandbox/interpreter.hpp"

#include "psdeob/decoder.hpp"
#include "psdeob/text.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

namespace psdeob::sbx {

namespace {

std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(a, b - a + 1));
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    char quote = 0;
    for (char c : s) {
        if (quote) {
            if (c == quote) {
                quote = 0;
            } else {
                cur += c;
            }
            continue;
        }
        if (c == '"' || c == '\'') {
            quote = c;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Value tagged(Value v, const Value& from) {
    inherit(v, from);
    return v;
}

/// Provenance of stream-like objects, kept in a hidden property.
Value& provenance(Object& o) { return o.props["\x01src"]; }

std::optional<std::string> to_bytes(const Value& v) {
    if (v.is(Value::Kind::Bytes)) return v.str;
    if (v.is(Value::Kind::Array)) {
        std::string out;
        out.reserve(v.items.size());
        for (const auto& it : v.items) {
            auto n = to_number(it);
            if (!n || !is_known(it)) return std::nullopt;
            out.push_back(static_cast<char>(static_cast<long long>(*n) & 0xFF));
        }
        return out;
    }
    if (v.is(Value::Kind::Number)) return std::string(1, static_cast<char>(static_cast<long long>(v.num) & 0xFF));
    return std::nullopt;
}

std::string encoding_name(const Value& v) {
    if (v.is(Value::Kind::Object) && v.obj && v.obj->type == "encoding") {
        auto it = v.obj->props.find("name");
        if (it != v.obj->props.end()) return it->second.str;
    }
    const std::string s = to_lower(to_str(v));
    if (s == "unicode" || s == "utf-16" || s == "utf16") return "unicode";
    if (s == "ascii") return "ascii";
    return "utf8";
}

Value encoding_object(std::string name) {
    auto o = make_object("encoding");
    o->props["name"] = Value::string(std::move(name));
    return Value::object(o);
}

std::string decode_text(std::string_view bytes, const std::string& enc) {
    if (enc == "unicode") return text::utf16_to_utf8(bytes);
    if (enc == "bigendianunicode") return text::utf16_to_utf8(bytes, true);
    if (enc == "ascii") {
        std::string out(bytes);
        for (auto& c : out) {
            if (static_cast<unsigned char>(c) > 0x7F) c = '?';
        }
        return out;
    }
    std::string_view b = bytes;
    if (b.starts_with("\xEF\xBB\xBF")) b.remove_prefix(3);
    return text::sanitize_utf8(b);
}

std::string encode_text(const std::string& s, const std::string& enc) {
    if (enc == "unicode") return text::utf8_to_utf16le(s);
    if (enc == "ascii") {
        std::string out;
        for (const auto& ch : utf8_chars(s)) {
            const long cp = first_code_point(ch);
            out.push_back(cp >= 0 && cp < 0x80 ? static_cast<char>(cp) : '?');
        }
        return out;
    }
    return s;
}

Value make_chars(const std::string& s, const Value& from) {
    std::vector<Value> items;
    for (auto& c : utf8_chars(s)) items.push_back(Value::string(std::move(c)));
    return tagged(Value::array(std::move(items)), from);
}

Value downloaded_content(const Value& url) {
    Value v = Value::unknown("<?>");
    v.downloaded = true;
    v.url = to_str(url);
    inherit(v, url);
    return v;
}

Value variable_info(const std::string& name, const Value& value) {
    auto o = make_object("variableinfo");
    o->props["name"] = Value::string(name);
    o->props["value"] = value;
    return Value::object(o);
}

Value command_info(const std::string& name) {
    auto o = make_object("commandinfo");
    o->props["name"] = Value::string(name);
    return Value::object(o);
}

bool is_url_like(std::string_view s) {
    const std::string l = to_lower(s);
    return l.starts_with("http://") || l.starts_with("https://") || l.starts_with("ftp://") || l.starts_with("\\\\");
}

/// Flatten bound arguments back into command-line words.
std::vector<Value> argv_of(const Args& args) {
    std::vector<Value> out;
    for (const auto& [k, v] : args.named) {
        out.push_back(Value::string("-" + k));
        if (!(v.is(Value::Kind::Bool) && v.b)) out.push_back(v);
    }
    for (const auto& v : args.positional) {
        for (auto& item : enumerate(v)) out.push_back(std::move(item));
    }
    return out;
}

}  // namespace

bool Interpreter::is_process_command(const std::string& canonical) {
    return canonical == "start-process" || canonical == "invoke-item" || canonical == "invoke-wmimethod" ||
           canonical == "start-job";
}

bool Interpreter::is_external_program(const std::string& name) const {
    static constexpr std::string_view kPrograms[] = {
        "cmd",      "powershell", "pwsh",     "wscript", "cscript", "mshta",   "rundll32", "regsvr32",
        "taskkill", "bitsadmin",  "certutil", "reg",     "schtasks", "msiexec", "net",     "whoami",
        "ping",     "timeout",    "wmic",     "sc",      "netsh",   "attrib",  "explorer", "notepad",
    };
    const std::string l = to_lower(trim(name));
    if (l.find('\\') != std::string::npos || l.find('/') != std::string::npos) return true;
    for (auto ext : {".exe", ".bat", ".cmd", ".vbs", ".js", ".hta", ".com", ".scr"}) {
        if (l.ends_with(ext)) return true;
    }
    const std::string stem = program_stem(l);
    if (stem.starts_with("%") && stem.ends_with("%")) return true;
    for (auto p : kPrograms) {
        if (stem == p) return true;
    }
    return false;
}

std::vector<Value> Interpreter::run_external(const std::string& name, const Args& args, Span) {
    const std::vector<Value> argv = argv_of(args);
    std::vector<std::string> words;
    bool known = true;
    for (const auto& v : argv) {
        if (!is_known(v)) known = false;
        for (auto& w : split_words(to_str(v))) words.push_back(std::move(w));
    }
    const std::string stem = program_stem(name);
    auto lower_word = [&](std::size_t i) { return i < words.size() ? to_lower(words[i]) : std::string(); };

    if (stem == "taskkill") {
        std::string target = "<?>";
        for (std::size_t i = 0; i + 1 < words.size(); ++i) {
            const std::string w = lower_word(i);
            if (w == "/im" || w == "/pid" || w == "-im" || w == "-pid") target = words[i + 1];
        }
        add_action(ActionKind::ProcKill, target, known && target != "<?>");
        return {};
    }
    if (stem == "bitsadmin" || stem == "certutil") {
        std::string url;
        for (const auto& w : words) {
            if (is_url_like(w)) url = w;
        }
        if (!url.empty()) {
            add_action(ActionKind::Download, url, known);
            if (!words.empty() && !is_url_like(words.back())) result.dropped_paths.push_back(words.back());
            return {};
        }
    }
    if (stem == "reg" && lower_word(0) == "add") {
        add_action(ActionKind::VarManip, "registry", true);
        return {};
    }
    if (is_shell_program(name)) {
        std::string line = trim(name);
        for (const auto& v : argv) line += " " + to_str(v);
        add_action(ActionKind::ShellExec, line, known && is_known(Value::string(name)));
        if (stem == "powershell" || stem == "pwsh") {
            for (std::size_t i = 0; i < words.size(); ++i) {
                const std::string w = lower_word(i);
                if (w.size() < 2 || w[0] != '-') continue;
                const std::string opt = w.substr(1);
                const bool enc = opt == "e" || opt == "ec" || (opt.size() >= 2 && std::string("encodedcommand").starts_with(opt));
                const bool cmd = opt == "c" || (opt.size() >= 2 && std::string("command").starts_with(opt));
                if (enc && i + 1 < words.size()) {
                    try {
                        do_eval(Value::string(bytes_to_text(base64_decode_bytes(words[i + 1]),
                                                            Base64Context::EncodedCommandFlag)));
                    } catch (const DecodeError& e) {
                        warn(std::string("encoded command not decodable: ") + e.what());
                    }
                    break;
                }
                if (cmd && i + 1 < words.size()) {
                    std::string rest;
                    for (std::size_t j = i + 1; j < words.size(); ++j) rest += (rest.empty() ? "" : " ") + words[j];
                    do_eval(known ? Value::string(rest) : Value::unknown(rest));
                    break;
                }
            }
        } else if (stem == "cmd" || stem == "%comspec%") {
            for (std::size_t i = 0; i < words.size(); ++i) {
                const std::string w = lower_word(i);
                if ((w == "/c" || w == "/k" || w == "/r") && i + 1 < words.size()) {
                    Args inner;
                    for (std::size_t j = i + 2; j < words.size(); ++j) inner.positional.push_back(Value::string(words[j]));
                    const std::string prog = words[i + 1];
                    if (is_external_program(prog) && !is_shell_program(prog)) run_external(prog, inner, {});
                    break;
                }
            }
        }
        return {};
    }
    add_action(ActionKind::ProcStart, Value::string(trim(name)));
    return {};
}

/// Start a process given a file and its argument words.
static void launch(Interpreter& in, const Value& file, const std::vector<Value>& argv) {
    const std::string f = trim(to_str(file));
    if (is_shell_program(f) || program_stem(f) == "taskkill" || program_stem(f) == "bitsadmin" ||
        program_stem(f) == "certutil" || program_stem(f) == "reg") {
        Args a;
        a.positional = argv;
        if (!is_known(file)) {
            in.add_action(ActionKind::ShellExec, file);
            return;
        }
        in.run_external(f, a, {});
        return;
    }
    in.add_action(ActionKind::ProcStart, file);
}

/// Split a command line into program and argument words.
static void launch_line(Interpreter& in, const Value& line) {
    const std::string s = to_str(line);
    auto words = split_words(s);
    if (words.empty()) return;
    Value file = is_known(line) ? Value::string(words[0]) : Value::unknown(words[0]);
    inherit(file, line);
    std::vector<Value> rest;
    for (std::size_t i = 1; i < words.size(); ++i) rest.push_back(Value::string(words[i]));
    launch(in, file, rest);
}

std::optional<std::vector<Value>> Interpreter::builtin_command(const std::string& name, const Args& args,
                                                               const std::vector<Value>* input, Span) {
    const std::vector<Value> none;
    const std::vector<Value>& in = input ? *input : none;

    if (name == "invoke-expression") {
        if (auto c = args.get({"command"}, 0)) {
            do_eval(*c);
        } else {
            for (const auto& v : in) do_eval(v);
        }
        return std::vector<Value>{};
    }
    if (name == "write-output" || name == "out-default") {
        std::vector<Value> out;
        for (const auto& v : args.all_values()) {
            for (auto& it : enumerate(v)) out.push_back(std::move(it));
        }
        out.insert(out.end(), in.begin(), in.end());
        return out;
    }
    if (name == "write-host" || name == "out-null" || name == "out-host" || name == "write-verbose" ||
        name == "write-debug" || name == "write-warning" || name == "write-error" || name == "write-progress" ||
        name == "start-sleep" || name == "clear-host" || name == "import-module" || name == "set-strictmode" ||
        name == "add-type" || name == "set-executionpolicy" || name == "wait-process" || name == "write-information") {
        if (name == "add-type") warn("Add-Type compiles code that is not emulated");
        return std::vector<Value>{};
    }
    if (name == "out-string") {
        std::string s;
        for (const auto& v : in) s += to_str(v) + "\r\n";
        Value r = Value::string(s);
        for (const auto& v : in) inherit(r, v);
        return std::vector<Value>{r};
    }
    if (name == "invoke-webrequest" || name == "invoke-restmethod") {
        const auto url = args.get({"uri"}, 0);
        if (!url) return std::vector<Value>{Value::unknown()};
        add_action(ActionKind::Download, *url);
        if (const Value* out = args.named_arg({"outfile"})) {
            result.dropped_paths.push_back(to_str(*out));
            return std::vector<Value>{};
        }
        return std::vector<Value>{downloaded_content(*url)};
    }
    if (name == "start-bitstransfer") {
        const auto url = args.get({"source"}, 0);
        if (url) add_action(ActionKind::Download, *url);
        if (auto dest = args.get({"destination"}, 1)) result.dropped_paths.push_back(to_str(*dest));
        return std::vector<Value>{};
    }
    if (name == "start-process" || name == "invoke-item") {
        const auto file = args.get({"filepath", "path", "literalpath"}, 0);
        if (!file) return std::vector<Value>{};
        std::vector<Value> argv;
        if (auto al = args.get({"argumentlist", "args"}, 1)) {
            for (const auto& it : enumerate(*al)) {
                for (auto& w : split_words(to_str(it))) {
                    argv.push_back(is_known(it) ? Value::string(w) : Value::unknown(w));
                }
            }
        }
        launch(*this, *file, argv);
        return std::vector<Value>{};
    }
    if (name == "invoke-wmimethod" || name == "invoke-cimmethod") {
        const std::string method = to_lower(to_str(args.get({"name", "methodname"}, 1).value_or(Value::null())));
        if (method == "create") {
            if (auto al = args.get({"argumentlist", "arguments"}, 2)) {
                Value line = enumerate(*al).empty() ? *al : enumerate(*al)[0];
                if (line.is(Value::Kind::Object) && line.obj) {
                    line = line.obj->props["commandline"];
                }
                launch_line(*this, line);
            }
        }
        return std::vector<Value>{};
    }
    if (name == "stop-process") {
        const auto target = args.get({"name", "id", "processname", "inputobject"}, 0);
        if (target) {
            add_action(ActionKind::ProcKill, *target);
        } else if (!in.empty()) {
            const Value& p = in[0];
            const bool has_name = p.is(Value::Kind::Object) && p.obj && p.obj->props.count("name");
            add_action(ActionKind::ProcKill, has_name ? p.obj->props.at("name") : p);
        }
        return std::vector<Value>{};
    }
    if (name == "set-variable" || name == "new-variable") {
        const auto n = args.get({"name"}, 0);
        if (!n) return std::vector<Value>{};
        Value v = args.get({"value"}, 1).value_or(in.empty() ? Value::null() : collapse(in));
        if (!v.env.empty()) {
            std::string names;
            for (const auto& e : v.env) names += (names.empty() ? "" : ",") + e;
            add_action(ActionKind::VarManip, names);
        }
        assign_var(to_str(*n), std::move(v));
        return std::vector<Value>{};
    }
    if (name == "remove-variable" || name == "clear-variable") {
        if (auto n = args.get({"name"}, 0)) assign_var(to_str(*n), Value::null());
        return std::vector<Value>{};
    }
    if (name == "get-variable") {
        const std::string pattern = to_str(args.get({"name"}, 0).value_or(Value::string("*")));
        std::vector<Value> out;
        for (const auto& [vn, vv] : visible_variables()) {
            if (!wildcard_match(pattern, vn)) continue;
            out.push_back(args.has_switch({"valueonly"}) ? vv : variable_info(vn, vv));
        }
        return out;
    }
    if (name == "set-item" || name == "new-item" || name == "set-content" || name == "add-content" ||
        name == "out-file") {
        const auto path = args.get({"path", "filepath", "literalpath"}, 0);
        if (!path) return std::vector<Value>{};
        const std::string p = to_str(*path);
        const std::string lp = to_lower(p);
        if (lp.starts_with("env:")) {
            const Value v = args.get({"value"}, 1).value_or(Value::null());
            write_env(p.substr(4), v);
            add_action(ActionKind::VarManip, p.substr(4));
            return std::vector<Value>{};
        }
        if (lp.starts_with("variable:")) {
            assign_var(p.substr(9), args.get({"value"}, 1).value_or(Value::null()));
            return std::vector<Value>{};
        }
        if (lp.starts_with("hk") && (lp.find(":\\") != std::string::npos || lp.find(":/") != std::string::npos)) {
            add_action(ActionKind::VarManip, "registry", true);
            return std::vector<Value>{};
        }
        if (name != "new-item" || to_lower(to_str(args.get({"itemtype"}, 99).value_or(Value::null()))) != "directory") {
            result.dropped_paths.push_back(p);
        }
        return std::vector<Value>{};
    }
    if (name == "set-itemproperty" || name == "new-itemproperty" || name == "remove-itemproperty") {
        add_action(ActionKind::VarManip, "registry", true);
        return std::vector<Value>{};
    }
    if (name == "get-item" || name == "get-childitem") {
        const auto path = args.get({"path", "literalpath"}, 0);
        if (!path) return std::vector<Value>{Value::unknown()};
        const std::string p = to_str(*path);
        const std::string lp = to_lower(p);
        if (lp.starts_with("env:") && lp.size() > 4 && lp.find('*') == std::string::npos) {
            auto o = make_object("variableinfo");
            o->props["name"] = Value::string([&] { std::string u = p.substr(4); for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c))); return u; }());
            o->props["value"] = read_env(p.substr(4), {});
            return std::vector<Value>{Value::object(o)};
        }
        if (lp.starts_with("variable:")) {
            std::vector<Value> out;
            for (const auto& [vn, vv] : visible_variables()) {
                if (wildcard_match(p.substr(9), vn)) out.push_back(variable_info(vn, vv));
            }
            return out;
        }
        return std::vector<Value>{Value::unknown()};
    }
    if (name == "set-alias" || name == "new-alias") {
        const auto n = args.get({"name"}, 0);
        const auto v = args.get({"value"}, 1);
        if (n && v && is_known(*n) && is_known(*v)) {
            user_aliases[to_lower(to_str(*n))] = to_str(*v);
        }
        return std::vector<Value>{};
    }
    if (name == "get-command") {
        const auto n = args.get({"name"}, 0);
        if (!n || !is_known(*n)) return std::vector<Value>{Value::unknown()};
        const std::string pattern = to_str(*n);
        std::vector<Value> out;
        const bool wild = pattern.find_first_of("*?[") != std::string::npos;
        if (!wild) {
            const auto canon = canonical_cmdlet(pattern);
            return std::vector<Value>{command_info(canon ? std::string(*canon) : pattern)};
        }
        for (const auto& [alias, target] : builtin_aliases()) {
            if (wildcard_match(pattern, alias)) out.push_back(command_info(alias));
        }
        for (auto c : all_cmdlets()) {
            if (wildcard_match(pattern, c)) out.push_back(command_info(std::string(c)));
        }
        return out;
    }
    if (name == "foreach-object") {
        std::vector<Value> blocks;
        std::optional<Value> member;
        if (const Value* p = args.named_arg({"process"})) blocks.push_back(*p);
        for (const auto& v : args.positional) {
            if (v.is(Value::Kind::Block)) {
                blocks.push_back(v);
            } else if (!member) {
                member = v;
            }
        }
        if (const Value* m = args.named_arg({"membername"})) member = *m;
        std::vector<Value> out;
        if (blocks.size() >= 2) {
            for (auto& v : run_with_item(blocks[0], Value::null())) out.push_back(std::move(v));
        }
        const Value* process = blocks.empty() ? nullptr : &blocks[blocks.size() >= 2 ? 1 : 0];
        for (const auto& item : in) {
            tick();
            if (process) {
                for (auto& v : run_with_item(*process, item)) out.push_back(std::move(v));
            } else if (member) {
                const std::string m = to_str(*member);
                Value r = get_member(item, m);
                if (r.is(Value::Kind::Null) || (r.is(Value::Kind::Unknown) && is_known(item))) {
                    r = call_method(item, m, {});
                }
                for (auto& v : enumerate(r)) out.push_back(std::move(v));
            }
        }
        if (blocks.size() >= 3) {
            for (auto& v : run_with_item(blocks[2], Value::null())) out.push_back(std::move(v));
        }
        return out;
    }
    if (name == "where-object") {
        const auto filter = args.get({"filterscript"}, 0);
        std::vector<Value> out;
        for (const auto& item : in) {
            tick();
            if (!filter || !filter->is(Value::Kind::Block)) {
                out.push_back(item);
                continue;
            }
            const Value r = collapse(run_with_item(*filter, item));
            if (!is_known(r) || truthy(r)) out.push_back(item);
        }
        return out;
    }
    if (name == "select-object") {
        std::vector<Value> items = in;
        if (const Value* e = args.named_arg({"expandproperty"})) {
            std::vector<Value> out;
            for (const auto& it : items) {
                for (auto& v : enumerate(get_member(it, to_str(*e)))) out.push_back(std::move(v));
            }
            items = std::move(out);
        }
        if (const Value* s = args.named_arg({"skip"})) {
            const auto n = static_cast<std::size_t>(std::max(0.0, to_number(*s).value_or(0)));
            items.erase(items.begin(), items.begin() + static_cast<long>(std::min(n, items.size())));
        }
        if (const Value* f = args.named_arg({"first"})) {
            const auto n = static_cast<std::size_t>(std::max(0.0, to_number(*f).value_or(0)));
            if (items.size() > n) items.resize(n);
        }
        if (const Value* l = args.named_arg({"last"})) {
            const auto n = static_cast<std::size_t>(std::max(0.0, to_number(*l).value_or(0)));
            if (items.size() > n) items.erase(items.begin(), items.end() - static_cast<long>(n));
        }
        if (const Value* ix = args.named_arg({"index"})) {
            std::vector<Value> out;
            for (const auto& i : enumerate(*ix)) {
                const auto n = to_number(i);
                if (n && *n >= 0 && static_cast<std::size_t>(*n) < items.size()) {
                    out.push_back(items[static_cast<std::size_t>(*n)]);
                }
            }
            items = std::move(out);
        }
        if (args.has_switch({"unique"})) {
            std::vector<Value> out;
            std::set<std::string> seen;
            for (auto& it : items) {
                if (seen.insert(to_str(it)).second) out.push_back(std::move(it));
            }
            items = std::move(out);
        }
        return items;
    }
    if (name == "sort-object") {
        std::vector<Value> items = in;
        std::stable_sort(items.begin(), items.end(), [](const Value& a, const Value& b) {
            const auto na = to_number(a);
            const auto nb = to_number(b);
            if (na && nb && (a.is(Value::Kind::Number) || b.is(Value::Kind::Number))) return *na < *nb;
            return to_lower(to_str(a)) < to_lower(to_str(b));
        });
        if (args.has_switch({"descending"})) std::reverse(items.begin(), items.end());
        return items;
    }
    if (name == "measure-object") {
        auto o = make_object("measureinfo");
        o->props["count"] = Value::number(static_cast<double>(in.size()));
        return std::vector<Value>{Value::object(o)};
    }
    if (name == "invoke-command" || name == "start-job") {
        const auto block = args.get({"scriptblock"}, 0);
        if (!block) return std::vector<Value>{};
        std::vector<Value> argv;
        if (auto al = args.get({"argumentlist"}, 1)) argv = enumerate(*al);
        if (block->is(Value::Kind::Block)) return call_block(*block, argv, input);
        do_eval(*block);
        return std::vector<Value>{};
    }
    if (name == "new-object") {
        if (const Value* com = args.named_arg({"comobject"})) {
            return std::vector<Value>{create_object("com:" + to_lower(to_str(*com)), {})};
        }
        const auto type = args.get({"typename"}, 0);
        if (!type) return std::vector<Value>{Value::unknown()};
        std::vector<Value> ctor;
        if (auto al = args.get({"argumentlist"}, 1)) ctor = al->is(Value::Kind::Array) ? al->items : std::vector<Value>{*al};
        if (!is_known(*type)) return std::vector<Value>{tagged(Value::unknown(), *type)};
        return std::vector<Value>{create_object(normalize_type(to_str(*type)), ctor)};
    }
    if (name == "get-random") {
        if (const Value* io = args.named_arg({"inputobject"})) {
            auto items = enumerate(*io);
            return std::vector<Value>{items.empty() ? Value::null() : items[0]};
        }
        if (!in.empty()) return std::vector<Value>{in[0]};
        const auto min = args.get({"minimum"}, 99);
        return std::vector<Value>{Value::number(min ? to_number(*min).value_or(0) : 0)};
    }
    if (name == "get-location") {
        return std::vector<Value>{Value::string("C:\\Users\\user")};
    }
    if (name == "join-path") {
        const auto a = args.get({"path"}, 0);
        const auto b = args.get({"childpath"}, 1);
        if (!a || !b) return std::vector<Value>{Value::unknown()};
        std::string s = to_str(*a);
        if (!s.empty() && s.back() != '\\' && s.back() != '/') s += '\\';
        std::string c = to_str(*b);
        while (!c.empty() && (c.front() == '\\' || c.front() == '/')) c.erase(0, 1);
        Value r = is_known(*a) && is_known(*b) ? Value::string(s + c) : Value::unknown(s + c);
        inherit(r, *a);
        inherit(r, *b);
        return std::vector<Value>{r};
    }
    if (name == "get-host") {
        return std::vector<Value>{Value::object(make_object("host"))};
    }
    if (name == "get-process") {
        auto o = make_object("diagnostics.process");
        o->props["name"] = args.get({"name", "processname", "id"}, 0).value_or(Value::unknown());
        return std::vector<Value>{Value::object(o)};
    }
    if (name == "invoke-shellcode" || name == "invoke-reflectivepeinjection") {
        add_action(ActionKind::MemLoad, "shellcode", true);
        return std::vector<Value>{};
    }
    if (name == "get-content" || name == "test-path" || name == "get-wmiobject" ||
        name == "get-ciminstance" || name == "resolve-path" || name == "get-itemproperty") {
        return std::vector<Value>{Value::unknown()};
    }
    return std::nullopt;
}

Value Interpreter::create_object(const std::string& type, const std::vector<Value>& ctor) {
    auto arg = [&](std::size_t i) { return i < ctor.size() ? ctor[i] : Value::null(); };
    if (type == "net.webclient" || type == "webclient" || type == "com:msxml2.xmlhttp" ||
        type == "com:microsoft.xmlhttp" || type == "com:winhttp.winhttprequest.5.1" ||
        type == "com:msxml2.serverxmlhttp" || type == "com:msxml2.serverxmlhttp.6.0" || type == "net.http.httpclient") {
        return Value::object(make_object(type.starts_with("com:") ? "xmlhttp" : "net.webclient"));
    }
    if (type == "com:wscript.shell" || type == "com:shell.application") {
        return Value::object(make_object(type.substr(4)));
    }
    if (type == "io.memorystream") {
        auto o = make_object("io.memorystream");
        const Value a = arg(0);
        if (auto b = to_bytes(a)) {
            o->data = *b;
        } else if (a.is(Value::Kind::Null)) {
            o->data = std::string();
        } else {
            o->data_known = false;
        }
        inherit(provenance(*o), a);
        return Value::object(o);
    }
    if (type == "io.compression.deflatestream" || type == "io.compression.gzipstream") {
        auto o = make_object(type);
        const Value inner = arg(0);
        if (inner.is(Value::Kind::Object) && inner.obj) {
            inherit(provenance(*o), provenance(*inner.obj));
            if (inner.obj->data && inner.obj->data_known) {
                try {
                    o->data = inflate_bytes(*inner.obj->data, type.ends_with("gzipstream")
                                                                  ? LayerType::Compression::Gzip
                                                                  : LayerType::Compression::Deflate);
                } catch (const DecodeError& e) {
                    warn(std::string("decompression failed: ") + e.what());
                    o->data_known = false;
                }
            } else {
                o->data_known = false;
            }
        } else {
            o->data_known = false;
        }
        return Value::object(o);
    }
    if (type == "io.streamreader") {
        auto o = make_object("io.streamreader");
        const Value inner = arg(0);
        if (inner.is(Value::Kind::Object) && inner.obj) {
            inherit(provenance(*o), provenance(*inner.obj));
            if (inner.obj->data && inner.obj->data_known) {
                o->data = decode_text(*inner.obj->data, encoding_name(arg(1)));
            } else {
                o->data_known = false;
            }
        } else {
            o->data_known = false;
        }
        return Value::object(o);
    }
    if (type == "text.utf8encoding" || type == "text.asciiencoding" || type == "text.unicodeencoding") {
        return encoding_object(type == "text.utf8encoding" ? "utf8" : type == "text.asciiencoding" ? "ascii" : "unicode");
    }
    if (type == "diagnostics.processstartinfo") {
        auto o = make_object("diagnostics.processstartinfo");
        o->props["filename"] = arg(0);
        o->props["arguments"] = arg(1);
        return Value::object(o);
    }
    if (type == "string") {
        const Value a = arg(0);
        if (a.is(Value::Kind::Array)) return tagged(Value::string(to_str(binary_op("-join", a, Value::string("")))), a);
        if (ctor.size() >= 2) return binary_op("*", Value::string(to_str(a)), arg(1));
        return Value::string(to_str(a));
    }
    if (type == "collections.arraylist" || type == "collections.generic.list[string]" ||
        type == "collections.generic.list[object]") {
        return Value::array({});
    }
    if (type == "char[]" || type == "byte[]") {
        const auto n = to_number(arg(0)).value_or(0);
        return type == "byte[]" ? Value::bytes(std::string(static_cast<std::size_t>(std::clamp(n, 0.0, 1e6)), '\0'))
                                : Value::array({});
    }
    auto o = make_object(type);
    for (std::size_t i = 0; i < ctor.size(); ++i) {
        o->props["arg" + std::to_string(i)] = ctor[i];
    }
    return Value::object(o);
}

Value Interpreter::get_member(const Value& target, const std::string& raw_name) {
    const std::string name = to_lower(raw_name);
    switch (target.kind) {
        case Value::Kind::Unknown:
            return tagged(Value::unknown(), target);
        case Value::Kind::Null:
            return Value::null();
        case Value::Kind::String:
            if (name == "length") return tagged(Value::number(static_cast<double>(utf8_chars(target.str).size())), target);
            if (name == "count") return Value::number(1);
            return Value::null();
        case Value::Kind::Bytes:
            if (name == "length" || name == "count") return Value::number(static_cast<double>(target.str.size()));
            return Value::null();
        case Value::Kind::Array: {
            if (name == "length" || name == "count") return Value::number(static_cast<double>(target.items.size()));
            std::vector<Value> out;
            for (const auto& it : target.items) {
                Value r = get_member(it, raw_name);
                if (!r.is(Value::Kind::Null)) out.push_back(std::move(r));
            }
            return tagged(collapse(std::move(out)), target);
        }
        case Value::Kind::Type:
            if (name == "name" || name == "fullname") return Value::string(target.str);
            return get_static(target.str, raw_name);
        case Value::Kind::Block:
            if (name == "ast" || name == "file") return Value::unknown();
            return Value::null();
        case Value::Kind::Number:
        case Value::Kind::Bool:
            return Value::null();
        case Value::Kind::Object:
            break;
    }
    Object& o = *target.obj;
    if (o.type == "executioncontext" || o.type == "sessionstate") {
        if (name == "invokecommand") return Value::object(make_object("commandintrinsics"));
        if (name == "sessionstate") return Value::object(make_object("sessionstate"));
        if (name == "invokeprovider") return Value::object(make_object("providerintrinsics"));
        return Value::unknown();
    }
    if (o.type == "host") {
        if (name == "name") return Value::string("ConsoleHost");
        if (name == "version") return Value::string("5.1.19041.1");
        if (name == "ui") return Value::object(make_object("host"));
        return Value::unknown();
    }
    if (o.type == "hashtable") {
        if (name == "keys" || name == "values") {
            std::vector<Value> out;
            for (const auto& [k, v] : o.props) out.push_back(name == "keys" ? Value::string(k) : v);
            return Value::array(std::move(out));
        }
        if (name == "count") return Value::number(static_cast<double>(o.props.size()));
    }
    if (o.type == "xmlhttp" && (name == "responsetext" || name == "responsebody" || name == "responsestream")) {
        return downloaded_content(o.props["url"]);
    }
    if (o.type == "commandinfo" && name == "name") return o.props["name"];
    if (auto it = o.props.find(name); it != o.props.end()) return it->second;
    if (o.type == "hashtable") return Value::null();
    return Value::unknown();
}

namespace {

Value string_method(Interpreter& in, const Value& target, const std::string& name, const std::vector<Value>& args) {
    auto arg = [&](std::size_t i) { return i < args.size() ? to_str(args[i]) : std::string(); };
    auto num = [&](std::size_t i) { return i < args.size() ? to_number(args[i]) : std::nullopt; };
    const std::string& s = target.str;
    auto known_args = [&] {
        for (const auto& a : args) {
            if (!is_known(a)) return false;
        }
        return true;
    };
    auto result = [&](Value v) {
        inherit(v, target);
        for (const auto& a : args) inherit(v, a);
        if (!known_args()) return tagged(Value::unknown(to_str(v)), v);
        return v;
    };
    if (name == "replace") {
        const std::string from = arg(0);
        const std::string to = arg(1);
        if (from.empty()) return result(Value::string(s));
        std::string out;
        std::size_t pos = 0;
        for (std::size_t at = s.find(from); at != std::string::npos; at = s.find(from, pos)) {
            out.append(s, pos, at - pos);
            out += to;
            pos = at + from.size();
        }
        out.append(s, pos);
        return result(Value::string(out));
    }
    if (name == "split") {
        std::string seps;
        for (const auto& a : args) {
            for (const auto& it : enumerate(a)) seps += to_str(it);
        }
        if (seps.empty()) seps = " \t\r\n";
        std::vector<Value> parts;
        std::string cur;
        for (const auto& ch : utf8_chars(s)) {
            if (ch.size() == 1 && seps.find(ch[0]) != std::string::npos) {
                parts.push_back(Value::string(cur));
                cur.clear();
            } else {
                cur += ch;
            }
        }
        parts.push_back(Value::string(cur));
        return result(Value::array(std::move(parts)));
    }
    const auto chars = utf8_chars(s);
    auto join_range = [&](std::size_t a, std::size_t b) {
        std::string out;
        for (std::size_t i = a; i < b && i < chars.size(); ++i) out += chars[i];
        return out;
    };
    if (name == "substring") {
        const auto a = num(0);
        if (!a || *a < 0 || *a > static_cast<double>(chars.size())) {
            in.warn("Substring index out of range");
            return tagged(Value::unknown(), target);
        }
        const auto start = static_cast<std::size_t>(*a);
        std::size_t len = chars.size() - start;
        if (auto b = num(1)) len = static_cast<std::size_t>(std::max(0.0, *b));
        return result(Value::string(join_range(start, start + len)));
    }
    if (name == "remove") {
        const auto a = static_cast<std::size_t>(std::max(0.0, num(0).value_or(0)));
        std::size_t len = chars.size() > a ? chars.size() - a : 0;
        if (auto b = num(1)) len = static_cast<std::size_t>(std::max(0.0, *b));
        return result(Value::string(join_range(0, a) + join_range(a + len, chars.size())));
    }
    if (name == "insert") {
        const auto a = static_cast<std::size_t>(std::max(0.0, num(0).value_or(0)));
        return result(Value::string(join_range(0, a) + arg(1) + join_range(a, chars.size())));
    }
    if (name == "tolower" || name == "tolowerinvariant") return result(Value::string(to_lower(s)));
    if (name == "toupper" || name == "toupperinvariant") {
        std::string u = s;
        for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        return result(Value::string(u));
    }
    if (name == "trim" || name == "trimstart" || name == "trimend") {
        std::string set = args.empty() ? std::string(" \t\r\n") : std::string();
        for (const auto& a : args) {
            for (const auto& it : enumerate(a)) set += to_str(it);
        }
        std::size_t a = 0;
        std::size_t b = s.size();
        if (name != "trimend") {
            while (a < b && set.find(s[a]) != std::string::npos) ++a;
        }
        if (name != "trimstart") {
            while (b > a && set.find(s[b - 1]) != std::string::npos) --b;
        }
        return result(Value::string(s.substr(a, b - a)));
    }
    if (name == "tochararray") return result(make_chars(s, target));
    if (name == "tostring" || name == "clone" || name == "normalize") return result(Value::string(s));
    if (name == "contains") return result(Value::boolean(s.find(arg(0)) != std::string::npos));
    if (name == "startswith") return result(Value::boolean(s.starts_with(arg(0))));
    if (name == "endswith") return result(Value::boolean(s.ends_with(arg(0))));
    if (name == "indexof" || name == "lastindexof") {
        const std::string needle = arg(0);
        const std::size_t at = name == "indexof" ? s.find(needle) : s.rfind(needle);
        if (at == std::string::npos) return result(Value::number(-1));
        return result(Value::number(static_cast<double>(utf8_chars(s.substr(0, at)).size())));
    }
    if (name == "padleft" || name == "padright") {
        const auto w = static_cast<std::size_t>(std::max(0.0, num(0).value_or(0)));
        const std::string pad = args.size() > 1 ? arg(1) : std::string(" ");
        std::string fill;
        for (std::size_t i = chars.size(); i < w; ++i) fill += pad;
        return result(Value::string(name == "padleft" ? fill + s : s + fill));
    }
    if (name == "getenumerator") return result(make_chars(s, target));
    if (name == "equals") return result(Value::boolean(s == arg(0)));
    if (name == "gettype") return Value::type("string");
    if (name == "invoke") {
        // "iex".Invoke(...) is not valid; treat as unknown
        return Value::unknown();
    }
    in.warn("string method " + name + " not emulated");
    return tagged(Value::unknown(), target);
}

}  // namespace

Value Interpreter::call_method(Value target, const std::string& raw_name, std::vector<Value> args) {
    tick();
    const std::string name = to_lower(raw_name);
    auto arg = [&](std::size_t i) { return i < args.size() ? args[i] : Value::null(); };

    static constexpr std::string_view kDownloadMethods[] = {
        "downloadstring", "downloaddata", "downloadfile", "openread", "downloadstringasync",
        "downloadfileasync", "downloaddataasync", "downloadstringtaskasync", "downloadfiletaskasync",
        "downloaddatataskasync", "getstringasync", "getbytearrayasync", "getasync", "getstreamasync",
    };
    const bool object_like = target.is(Value::Kind::Object) || target.is(Value::Kind::Unknown);
    if (object_like) {
        for (auto m : kDownloadMethods) {
            if (name != m) continue;
            const Value url = arg(0);
            add_action(ActionKind::Download, url);
            if (name.starts_with("downloadfile")) {
                result.dropped_paths.push_back(to_str(arg(1)));
                return Value::null();
            }
            return downloaded_content(url);
        }
    }
    if (name == "kill" && object_like) {
        Value who = Value::unknown();
        if (target.is(Value::Kind::Object) && target.obj) {
            if (auto it = target.obj->props.find("name"); it != target.obj->props.end()) who = it->second;
        }
        add_action(ActionKind::ProcKill, who);
        return Value::null();
    }
    if (target.is(Value::Kind::Unknown)) {
        Value u = Value::unknown();
        inherit(u, target);
        for (const auto& a : args) inherit(u, a);
        return u;
    }
    if (target.is(Value::Kind::Block)) {
        if (name == "invoke" || name == "invokereturnasis") return collapse(call_block(target, args));
        if (name == "getnewclosure") return target;
        if (name == "tostring") return Value::string(target.block_source);
        return Value::unknown();
    }
    if (name == "gettype") {
        if (target.is(Value::Kind::Object)) return Value::type(target.obj->type);
        return Value::type(target.is(Value::Kind::Number) ? "int32" : target.is(Value::Kind::Array) ? "object[]" : "object");
    }
    if (target.is(Value::Kind::String)) return string_method(*this, target, name, args);
    if (target.is(Value::Kind::Array) || target.is(Value::Kind::Bytes)) {
        if (name == "tostring") return Value::string(target.is(Value::Kind::Bytes) ? "System.Byte[]" : "System.Object[]");
        if (name == "contains") return Value::boolean(is_known(binary_op("-contains", target, arg(0))) &&
                                                      truthy(binary_op("-contains", target, arg(0))));
        if (name == "indexof") {
            const auto items = enumerate(target);
            for (std::size_t i = 0; i < items.size(); ++i) {
                if (to_str(items[i]) == to_str(arg(0))) return Value::number(static_cast<double>(i));
            }
            return Value::number(-1);
        }
        if (name == "clone") return target;
        if (name == "getenumerator") return target;
        if (name == "add") {
            warn("in-place Add on a collection is not tracked");
            return Value::null();
        }
        // Method calls on arrays apply to each element.
        std::vector<Value> out;
        for (const auto& it : enumerate(target)) out.push_back(call_method(it, raw_name, args));
        return collapse(std::move(out));
    }
    if (target.is(Value::Kind::Number) || target.is(Value::Kind::Bool)) {
        if (name == "tostring") {
            if (!args.empty() && target.is(Value::Kind::Number)) {
                const std::string f = to_str(arg(0));
                if (!f.empty() && (f[0] == 'x' || f[0] == 'X')) {
                    return format_op(Value::string("{0:" + f + "}"), target);
                }
            }
            return Value::string(to_str(target));
        }
        if (name == "equals") return Value::boolean(to_str(target) == to_str(arg(0)));
        return Value::unknown();
    }
    if (!target.is(Value::Kind::Object) || !target.obj) {
        return Value::unknown();
    }
    Object& o = *target.obj;
    if (o.type == "xmlhttp") {
        if (name == "open") {
            o.props["url"] = arg(1);
            return Value::null();
        }
        if (name == "send") {
            add_action(ActionKind::Download, o.props["url"]);
            return Value::null();
        }
        return Value::null();
    }
    if (o.type == "wscript.shell") {
        if (name == "run" || name == "exec") {
            launch_line(*this, arg(0));
            return Value::number(0);
        }
        if (name == "regwrite" || name == "regdelete") {
            add_action(ActionKind::VarManip, "registry", true);
            return Value::null();
        }
        if (name == "expandenvironmentstrings") {
            std::string s = to_str(arg(0));
            std::regex re("%([A-Za-z0-9_()]+)%");
            std::string out;
            std::size_t pos = 0;
            Value prov;
            for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
                out.append(s, pos, static_cast<std::size_t>(it->position(0)) - pos);
                const Value v = read_env((*it)[1].str(), {});
                inherit(prov, v);
                out += to_str(v);
                pos = static_cast<std::size_t>(it->position(0) + it->length(0));
            }
            out.append(s, pos);
            return tagged(Value::string(out), prov);
        }
        return Value::unknown();
    }
    if (o.type == "shell.application") {
        if (name == "shellexecute") {
            std::vector<Value> argv;
            for (auto& w : split_words(to_str(arg(1)))) argv.push_back(Value::string(w));
            launch(*this, arg(0), argv);
        }
        return Value::null();
    }
    if (o.type == "encoding") {
        const std::string enc = o.props["name"].str;
        if (name == "getstring") {
            const Value a = arg(0);
            if (!is_known(a)) return tagged(Value::unknown(), a);
            auto b = to_bytes(a);
            if (!b) return tagged(Value::unknown(), a);
            if (args.size() >= 3) {
                const auto off = static_cast<std::size_t>(std::max(0.0, to_number(args[1]).value_or(0)));
                const auto cnt = static_cast<std::size_t>(std::max(0.0, to_number(args[2]).value_or(0)));
                *b = off < b->size() ? b->substr(off, cnt) : std::string();
            }
            return tagged(Value::string(decode_text(*b, enc)), a);
        }
        if (name == "getbytes") {
            const Value a = arg(0);
            if (!is_known(a)) return tagged(Value::unknown(), a);
            return tagged(Value::bytes(encode_text(to_str(a), enc)), a);
        }
        return Value::unknown();
    }
    if (o.type == "io.streamreader") {
        if (name == "readtoend" || name == "readline") {
            Value r = o.data && o.data_known ? Value::string(*o.data) : Value::unknown();
            return tagged(r, provenance(o));
        }
        return Value::null();
    }
    if (o.type == "io.memorystream" || o.type == "io.compression.deflatestream" || o.type == "io.compression.gzipstream") {
        if (name == "toarray") {
            Value r = o.data && o.data_known ? Value::bytes(*o.data) : Value::unknown();
            return tagged(r, provenance(o));
        }
        if (name == "copyto") {
            const Value dest = arg(0);
            if (dest.is(Value::Kind::Object) && dest.obj) {
                dest.obj->data = o.data;
                dest.obj->data_known = o.data_known;
                inherit(provenance(*dest.obj), provenance(o));
            }
            return Value::null();
        }
        return Value::null();
    }
    if (o.type == "commandintrinsics") {
        if (name == "invokescript") {
            do_eval(arg(0));
            return Value::null();
        }
        if (name == "newscriptblock") {
            Value b;
            b.kind = Value::Kind::Block;
            b.block_source = to_str(arg(0));
            inherit(b, arg(0));
            if (!is_known(arg(0))) return tagged(Value::unknown(), arg(0));
            return b;
        }
        if (name == "expandstring") return tagged(expand(to_str(arg(0))), arg(0));
        if (name == "getcommand" || name == "getcmdlet" || name == "getcommandname") {
            const Value n = arg(0);
            if (!is_known(n)) return tagged(Value::unknown(), n);
            const std::string s = to_str(n);
            if (s.find_first_of("*?") != std::string::npos) {
                Args a;
                a.positional.push_back(n);
                auto r = builtin_command("get-command", a, nullptr, {});
                return collapse(r ? std::move(*r) : std::vector<Value>{});
            }
            const auto canon = canonical_cmdlet(s);
            return command_info(canon ? std::string(*canon) : s);
        }
        return Value::unknown();
    }
    if (o.type == "commandinfo" && (name == "invoke" || name == "invokereturnasis")) {
        const std::string cmd = canonical_command(to_lower(to_str(o.props["name"])));
        Args a;
        a.positional = args;
        if (auto r = builtin_command(cmd, a, nullptr, {})) return collapse(std::move(*r));
        warn("invoked command " + cmd + " not emulated");
        return Value::unknown();
    }
    if (o.type == "diagnostics.processstartinfo" && name == "start") {
        launch_line(*this, binary_op("+", binary_op("+", o.props["filename"], Value::string(" ")), o.props["arguments"]));
        return Value::null();
    }
    if (o.type == "appdomain" && name == "load") {
        const Value a = arg(0);
        add_action(ActionKind::MemLoad, a.downloaded ? a.url : std::string("assembly"), true);
        return Value::object(make_object("reflection.assembly"));
    }
    if (o.type == "hashtable") {
        if (name == "containskey") return Value::boolean(o.props.count(to_lower(to_str(arg(0)))) > 0);
        if (name == "add") {
            o.props[to_lower(to_str(arg(0)))] = arg(1);
            return Value::null();
        }
        if (name == "getenumerator") return Value::array({});
    }
    if (o.type == "reflection.assembly" || o.type == "reflection.methodinfo") {
        if (name == "gettype" || name == "getmethod" || name == "entrypoint") {
            return Value::object(make_object("reflection.methodinfo"));
        }
        if (name == "invoke" || name == "createinstance") return Value::unknown();
    }
    if (name == "tostring") return Value::string(to_str(target));
    if (name == "dispose" || name == "close" || name == "flush" || name == "write" || name == "setrequestheader" ||
        name == "add") {
        return Value::null();
    }
    warn("method " + raw_name + " on " + o.type + " not emulated");
    return Value::unknown();
}

Value Interpreter::get_static(const std::string& type, const std::string& raw_name) {
    const std::string name = to_lower(raw_name);
    if (type == "text.encoding") {
        if (name == "utf8" || name == "default") return encoding_object("utf8");
        if (name == "unicode") return encoding_object("unicode");
        if (name == "bigendianunicode") return encoding_object("bigendianunicode");
        if (name == "ascii") return encoding_object("ascii");
        if (name == "utf32" || name == "utf7") return encoding_object("utf8");
    }
    if (type == "environment") {
        if (name == "newline") return Value::string("\r\n");
        if (name == "currentdirectory") return Value::string("C:\\Users\\user");
        if (name == "username") return Value::string("user");
        if (name == "machinename") return Value::string("DESKTOP");
        if (name == "is64bitoperatingsystem" || name == "is64bitprocess") return Value::boolean(true);
        if (name == "systemdirectory") return Value::string("C:\\Windows\\system32");
        return Value::unknown();
    }
    if (type == "io.path") {
        if (name == "directoryseparatorchar") return Value::string("\\");
        if (name == "pathseparator") return Value::string(";");
    }
    if (type == "appdomain" && name == "currentdomain") return Value::object(make_object("appdomain"));
    if (type == "math" && name == "pi") return Value::number(3.141592653589793);
    if (type == "int32" || type == "int") {
        if (name == "maxvalue") return Value::number(2147483647);
        if (name == "minvalue") return Value::number(-2147483648.0);
    }
    if (type == "string" && name == "empty") return Value::string("");
    // Enumeration members read as their names.
    return Value::string(raw_name);
}

Value Interpreter::call_static(const std::string& type, const std::string& raw_name, std::vector<Value> args,
                               const Node* node) {
    tick();
    const std::string name = to_lower(raw_name);
    auto arg = [&](std::size_t i) { return i < args.size() ? args[i] : Value::null(); };
    bool known = true;
    Value prov;
    for (const auto& a : args) {
        if (!is_known(a)) known = false;
        inherit(prov, a);
    }
    auto out = [&](Value v) { return tagged(std::move(v), prov); };

    if (name == "new") return create_object(type, args);
    if (name == "virtualalloc" || name == "virtualallocex" || name == "createthread" || name == "createremotethread") {
        if (name.starts_with("virtualalloc")) add_action(ActionKind::MemLoad, "shellcode", true);
        return Value::number(0x10000);
    }
    if (type == "convert") {
        if (name == "frombase64string" || name == "frombase64chararray") {
            if (!known) return out(Value::unknown());
            try {
                return out(Value::bytes(base64_decode_bytes(to_str(binary_op("-join", arg(0), Value::string(""))))));
            } catch (const DecodeError& e) {
                warn(std::string("FromBase64String failed: ") + e.what());
                return out(Value::unknown());
            }
        }
        if (name == "tobase64string") {
            if (!known) return out(Value::unknown());
            auto b = to_bytes(arg(0));
            return out(b ? Value::string(base64_encode(*b)) : Value::unknown());
        }
        if (name == "toint32" || name == "toint16" || name == "toint64" || name == "tobyte" || name == "touint32") {
            if (!known) return out(Value::unknown());
            const std::string s = to_lower(trim(to_str(arg(0))));
            int base = 10;
            if (args.size() > 1) base = static_cast<int>(to_number(args[1]).value_or(10));
            try {
                std::size_t used = 0;
                const std::string digits = base == 16 && s.starts_with("0x") ? s.substr(2) : s;
                const long long v = std::stoll(digits, &used, base);
                if (used != digits.size()) throw std::invalid_argument("digits");
                return out(Value::number(static_cast<double>(v)));
            } catch (const std::exception&) {
                if (auto n = to_number(arg(0))) return out(Value::number(std::round(*n)));
                warn("Convert." + raw_name + " failed");
                return out(Value::unknown());
            }
        }
        if (name == "tochar") {
            if (!known) return out(Value::unknown());
            return out(cast("char", arg(0)));
        }
        if (name == "tostring") {
            if (!known) return out(Value::unknown());
            if (args.size() > 1) {
                const auto n = to_number(args[0]);
                const int base = static_cast<int>(to_number(args[1]).value_or(10));
                if (n && (base == 2 || base == 8 || base == 16)) {
                    auto v = static_cast<unsigned long long>(static_cast<long long>(*n));
                    if (v == 0) return out(Value::string("0"));
                    std::string s;
                    while (v) {
                        s.insert(s.begin(), "0123456789abcdef"[v % static_cast<unsigned>(base)]);
                        v /= static_cast<unsigned>(base);
                    }
                    return out(Value::string(s));
                }
            }
            return out(Value::string(to_str(arg(0))));
        }
    }
    if (type == "text.encoding" && name == "getencoding") {
        return encoding_object(encoding_name(arg(0)));
    }
    if (type == "environment") {
        if (name == "getenvironmentvariable") {
            if (!is_known(arg(0))) return out(Value::unknown());
            return read_env(to_str(arg(0)), {});
        }
        if (name == "setenvironmentvariable") {
            write_env(to_str(arg(0)), arg(1));
            add_action(ActionKind::VarManip, Value::string(to_str(arg(0))));
            return Value::null();
        }
        if (name == "expandenvironmentvariables") {
            auto shell = Value::object(make_object("wscript.shell"));
            return call_method(shell, "ExpandEnvironmentStrings", args);
        }
        if (name == "getfolderpath") {
            const std::string f = to_lower(to_str(arg(0)));
            if (f == "applicationdata") return Value::string("C:\\Users\\user\\AppData\\Roaming");
            if (f == "localapplicationdata") return Value::string("C:\\Users\\user\\AppData\\Local");
            if (f == "startup") return Value::string("C:\\Users\\user\\AppData\\Roaming\\Microsoft\\Windows\\Start Menu\\Programs\\Startup");
            if (f == "desktop" || f == "desktopdirectory") return Value::string("C:\\Users\\user\\Desktop");
            return Value::string("C:\\Users\\user");
        }
        if (name == "exit") throw ExitSignal{};
    }
    if (type == "io.path") {
        if (name == "combine") {
            std::string s;
            for (const auto& a : args) {
                std::string part = to_str(a);
                if (!s.empty() && s.back() != '\\' && s.back() != '/') s += '\\';
                s += part;
            }
            return out(known ? Value::string(s) : Value::unknown(s));
        }
        if (name == "gettemppath") return Value::string("C:\\Users\\user\\AppData\\Local\\Temp\\");
        if (name == "gettempfilename") return Value::string("C:\\Users\\user\\AppData\\Local\\Temp\\tmp1.tmp");
        if (name == "getrandomfilename") return Value::string("x1y2z3.tmp");
        if (name == "getfilename") {
            const std::string s = to_str(arg(0));
            const auto slash = s.find_last_of("\\/");
            return out(Value::string(slash == std::string::npos ? s : s.substr(slash + 1)));
        }
    }
    if (type == "io.file") {
        if (name == "writeallbytes" || name == "writealltext" || name == "appendalltext" || name == "writealllines" ||
            name == "copy" || name == "move") {
            result.dropped_paths.push_back(to_str(name == "copy" || name == "move" ? arg(1) : arg(0)));
            return Value::null();
        }
        return out(Value::unknown());
    }
    if (type == "diagnostics.process" && name == "start") {
        const Value a = arg(0);
        if (a.is(Value::Kind::Object) && a.obj && a.obj->type == "diagnostics.processstartinfo") {
            return call_method(a, "Start", {});
        }
        std::vector<Value> argv;
        for (auto& w : split_words(to_str(arg(1)))) argv.push_back(Value::string(w));
        launch(*this, a, argv);
        return Value::object(make_object("diagnostics.process"));
    }
    if (type == "reflection.assembly") {
        if (name == "load" || name == "loadfile" || name == "loadfrom" || name == "unsafeloadfrom") {
            const Value a = arg(0);
            std::string detail = a.downloaded ? a.url : (name == "load" ? std::string("assembly") : to_str(a));
            add_action(ActionKind::MemLoad, detail, !a.downloaded || !a.url.empty());
            return Value::object(make_object("reflection.assembly"));
        }
        return Value::null();
    }
    if (type == "runtime.interopservices.marshal") {
        if (name == "copy") {
            const Value a = arg(0);
            add_action(ActionKind::MemLoad, a.downloaded ? a.url : std::string("shellcode"), true);
            return Value::null();
        }
        return Value::unknown();
    }
    if (type == "management.automation.scriptblock" || type == "scriptblock") {
        if (name == "create") {
            if (!known) return out(Value::unknown());
            Value b;
            b.kind = Value::Kind::Block;
            b.block_source = to_str(arg(0));
            return out(b);
        }
    }
    if (type == "char") {
        if (name == "convertfromutf32" || name == "tostring") return out(cast("char", arg(0)));
        if (name == "isletter" || name == "isdigit" || name == "isupper" || name == "islower") {
            const long cp = first_code_point(to_str(arg(0)));
            bool r = false;
            if (cp >= 0 && cp < 128) {
                const int c = static_cast<int>(cp);
                if (name == "isletter") r = std::isalpha(c);
                if (name == "isdigit") r = std::isdigit(c);
                if (name == "isupper") r = std::isupper(c);
                if (name == "islower") r = std::islower(c);
            }
            return out(Value::boolean(r));
        }
    }
    if (type == "string") {
        if (name == "join") {
            std::vector<Value> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
            const Value items = rest.size() == 1 ? rest[0] : Value::array(rest);
            return binary_op("-join", items, arg(0));
        }
        if (name == "concat") {
            Value acc = Value::string("");
            for (const auto& a : args) {
                for (const auto& it : enumerate(a)) acc = binary_op("+", acc, Value::string(to_str(it)));
                if (!is_known(a)) acc = tagged(Value::unknown(to_str(acc)), acc);
            }
            return acc;
        }
        if (name == "format") {
            std::vector<Value> rest(args.begin() + (args.empty() ? 0 : 1), args.end());
            return format_op(arg(0), rest.size() == 1 ? rest[0] : Value::array(rest));
        }
        if (name == "isnullorempty" || name == "isnullorwhitespace") {
            if (!known) return out(Value::unknown());
            return Value::boolean(trim(to_str(arg(0))).empty());
        }
        if (name == "new") return create_object("string", args);
    }
    if (type == "array" && name == "reverse") {
        Value a = arg(0);
        if (a.is(Value::Kind::Array)) {
            std::reverse(a.items.begin(), a.items.end());
        } else if (a.is(Value::Kind::Bytes)) {
            std::reverse(a.str.begin(), a.str.end());
        }
        if (node && node->kids.size() > 1 && node->kids[1]->k == NK::Var) {
            assign_var(node->kids[1]->text, a);
        }
        return Value::null();
    }
    if (type == "math") {
        const auto a = to_number(arg(0));
        const auto b = to_number(arg(1));
        if (!known || !a) return out(Value::unknown());
        if (name == "floor") return out(Value::number(std::floor(*a)));
        if (name == "ceiling") return out(Value::number(std::ceil(*a)));
        if (name == "round") return out(Value::number(std::nearbyint(*a)));
        if (name == "abs") return out(Value::number(std::fabs(*a)));
        if (name == "truncate") return out(Value::number(std::trunc(*a)));
        if (name == "sqrt") return out(Value::number(std::sqrt(*a)));
        if (b && name == "pow") return out(Value::number(std::pow(*a, *b)));
        if (b && name == "min") return out(Value::number(std::min(*a, *b)));
        if (b && name == "max") return out(Value::number(std::max(*a, *b)));
    }
    if (type == "regex" || type == "text.regularexpressions.regex") {
        if (!known) return out(Value::unknown());
        const std::string s = to_str(arg(0));
        const std::string pattern = to_str(arg(1));
        if (name == "escape") {
            static const std::regex special(R"([.^$|()\[\]{}*+?\\#\s])");
            return out(Value::string(std::regex_replace(s, special, "\\$&")));
        }
        if (name == "unescape") {
            return out(Value::string(std::regex_replace(s, std::regex(R"(\\(.))"), "$1")));
        }
        bool icase = false;
        bool rtl = false;
        for (std::size_t i = 2; i < args.size(); ++i) {
            const std::string opt = to_lower(to_str(args[i]));
            if (opt.find("ignorecase") != std::string::npos) icase = true;
            if (opt.find("righttoleft") != std::string::npos) rtl = true;
        }
        if (name == "replace") {
            const std::string rep = args.size() > 2 && !rtl && !icase ? to_str(args[2]) : to_str(arg(2));
            return out(binary_op(icase ? "-replace" : "-creplace", Value::string(s),
                                 Value::array({Value::string(pattern), Value::string(rep)})));
        }
        if (name == "split") {
            return out(binary_op("-csplit", Value::string(s), Value::string(pattern)));
        }
        if (name == "matches" || name == "match" || name == "ismatch") {
            std::vector<Value> matches;
            try {
                auto flags = std::regex::ECMAScript;
                if (icase) flags |= std::regex::icase;
                const std::regex re(pattern, flags);
                for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
                    auto m = make_object("match");
                    m->props["value"] = Value::string(it->str(0));
                    m->props["index"] = Value::number(static_cast<double>(it->position(0)));
                    m->props["success"] = Value::boolean(true);
                    matches.push_back(Value::object(m));
                }
            } catch (const std::regex_error&) {
                warn("regex pattern not supported: " + pattern);
                return out(Value::unknown());
            }
            if (rtl) std::reverse(matches.begin(), matches.end());
            if (name == "ismatch") return Value::boolean(!matches.empty());
            if (name == "match") return matches.empty() ? Value::null() : out(matches[0]);
            return out(Value::array(std::move(matches)));
        }
    }
    if (type == "activator" && name == "createinstance") {
        return create_object(normalize_type(to_str(arg(0))), std::vector<Value>(args.begin() + (args.empty() ? 0 : 1), args.end()));
    }
    if (type == "net.servicepointmanager" || type == "console" || type == "threading.thread" || type == "gc") {
        return Value::null();
    }
    if ((type == "int" || type == "int32" || type == "double" || type == "long" || type == "byte") && name == "parse") {
        return out(cast(type, arg(0)));
    }
    if (type == "guid" && name == "newguid") return Value::string("00000000-0000-0000-0000-000000000000");
    warn("static member [" + type + "]::" + raw_name + " not emulated");
    return out(Value::unknown());
}

Value Interpreter::cast(const std::string& raw_type, const Value& v) {
    const std::string type = normalize_type(raw_type);
    if (type == "void") return Value::null();
    if (v.is(Value::Kind::Unknown)) return v;
    if (type == "string") {
        if (!is_known(v)) return tagged(Value::unknown(to_str(v)), v);
        return tagged(Value::string(to_str(v)), v);
    }
    if (type == "char") {
        if (v.is(Value::Kind::String)) {
            const auto chars = utf8_chars(v.str);
            if (chars.size() == 1) return v;
            if (auto n = to_number(v)) return tagged(Value::string(char_string(*n)), v);
            warn("cannot convert '" + v.str + "' to char");
            return tagged(Value::unknown(), v);
        }
        if (auto n = to_number(v)) return tagged(Value::string(char_string(*n)), v);
        return tagged(Value::unknown(), v);
    }
    if (type == "char[]") {
        if (v.is(Value::Kind::String)) return make_chars(v.str, v);
        std::vector<Value> out;
        for (const auto& it : enumerate(v)) out.push_back(cast("char", it));
        return tagged(Value::array(std::move(out)), v);
    }
    if (type == "int" || type == "int32" || type == "int64" || type == "long" || type == "int16" || type == "byte" ||
        type == "uint32" || type == "uint16" || type == "uint64" || type == "sbyte" || type == "short") {
        std::optional<double> n = to_number(v);
        if (!n && v.is(Value::Kind::String) && utf8_chars(v.str).size() == 1) {
            n = static_cast<double>(first_code_point(v.str));
        }
        if (!n) {
            warn("cannot convert '" + to_str(v) + "' to " + type);
            return tagged(Value::unknown(), v);
        }
        return tagged(Value::number(std::nearbyint(*n)), v);
    }
    if (type == "double" || type == "float" || type == "single" || type == "decimal") {
        const auto n = to_number(v);
        return tagged(n ? Value::number(*n) : Value::unknown(), v);
    }
    if (type == "byte[]") {
        if (v.is(Value::Kind::Bytes)) return v;
        if (auto b = to_bytes(v)) return tagged(Value::bytes(*b), v);
        return tagged(Value::unknown(), v);
    }
    if (type == "bool" || type == "boolean") return tagged(Value::boolean(truthy(v)), v);
    if (type == "scriptblock" || type == "management.automation.scriptblock") {
        if (v.is(Value::Kind::Block)) return v;
        Value b;
        b.kind = Value::Kind::Block;
        b.block_source = to_str(v);
        return tagged(b, v);
    }
    if (type == "array" || type == "object[]" || type == "string[]" || type == "int[]") {
        std::vector<Value> items = enumerate(v);
        if (type == "string[]") {
            for (auto& it : items) it = cast("string", it);
        } else if (type == "int[]") {
            for (auto& it : items) it = cast("int", it);
        }
        return tagged(Value::array(std::move(items)), v);
    }
    if (type == "type") return Value::type(normalize_type(to_str(v)));
    return v;
}

}  // namespace psdeob::sbx
