#include "psdeob/behavior.hpp"

#include <algorithm>
#include <regex>

namespace psdeob {

std::string_view to_string(BehavioralPattern p) {
    switch (p) {
        case BehavioralPattern::DownExec: return "DownExec";
        case BehavioralPattern::DownShell: return "DownShell";
        case BehavioralPattern::ExecShell: return "ExecShell";
        case BehavioralPattern::ExecVar: return "ExecVar";
        case BehavioralPattern::ShellKill: return "ShellKill";
        case BehavioralPattern::MemExec: return "MemExec";
        case BehavioralPattern::Unclassified: return "Unclassified";
    }
    return "Unclassified";
}

std::set<ActionKind> pattern_action_set(BehavioralPattern p) {
    using A = ActionKind;
    switch (p) {
        case BehavioralPattern::DownExec: return {A::Download, A::ProcStart};
        case BehavioralPattern::DownShell: return {A::Download, A::ShellExec};
        case BehavioralPattern::ExecShell: return {A::Download, A::ProcStart, A::ShellExec};
        case BehavioralPattern::ExecVar: return {A::Download, A::ProcStart, A::VarManip};
        case BehavioralPattern::ShellKill: return {A::Download, A::ShellExec, A::VarManip, A::ProcKill};
        case BehavioralPattern::MemExec: return {A::ProcStart, A::MemLoad};
        case BehavioralPattern::Unclassified: return {};
    }
    return {};
}

BehavioralPattern classify_pattern(const std::set<ActionKind>& kinds) {
    for (auto p : kClassifiedPatterns) {
        if (pattern_action_set(p) == kinds) {
            return p;
        }
    }
    return BehavioralPattern::Unclassified;
}

BehavioralPattern classify_pattern(const std::vector<ActionRecord>& actions) {
    std::set<ActionKind> kinds;
    for (const auto& a : actions) {
        kinds.insert(a.kind);
    }
    return classify_pattern(kinds);
}

std::vector<EnvVarStat> extract_env_vars(const std::vector<EnvVarUse>& uses) {
    std::vector<EnvVarStat> out;
    for (const auto& u : uses) {
        std::string name = u.name;
        for (auto& c : name) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const EnvVarStat& s) { return s.name == name && s.usage == u.usage; });
        if (it == out.end()) {
            out.push_back({name, u.usage, 1});
        } else {
            ++it->count;
        }
    }
    return out;
}

std::string_view to_string(IocKind kind) {
    switch (kind) {
        case IocKind::Url: return "Url";
        case IocKind::Domain: return "Domain";
        case IocKind::Ip: return "Ip";
        case IocKind::FilePath: return "FilePath";
    }
    return "Url";
}

namespace {

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string dots_bracketed(std::string_view host) { return replace_all(std::string(host), ".", "[.]"); }

bool is_ipv4(std::string_view host) {
    static const std::regex re(R"(^(\d{1,3})\.(\d{1,3})\.(\d{1,3})\.(\d{1,3})$)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_match(host.begin(), host.end(), m, re)) {
        return false;
    }
    for (std::size_t i = 1; i <= 4; ++i) {
        if (std::stoi(m[i].str()) > 255) return false;
    }
    return true;
}

/// Offsets of the host inside a URL: [begin, end).
std::optional<std::pair<std::size_t, std::size_t>> host_range(std::string_view url) {
    const auto sep = url.find("://");
    if (sep == std::string_view::npos) {
        return std::nullopt;
    }
    std::size_t begin = sep + 3;
    std::size_t end = url.find_first_of("/?#", begin);
    if (end == std::string_view::npos) end = url.size();
    const auto at = url.substr(begin, end - begin).rfind('@');
    if (at != std::string_view::npos) begin += at + 1;
    std::size_t host_end = end;
    if (begin < url.size() && url[begin] == '[') {
        const auto close = url.find(']', begin);
        if (close != std::string_view::npos && close < end) host_end = close + 1;
    } else {
        const auto colon = url.substr(begin, end - begin).find(':');
        if (colon != std::string_view::npos) host_end = begin + colon;
    }
    if (host_end <= begin) {
        return std::nullopt;
    }
    return std::make_pair(begin, host_end);
}

}  // namespace

std::optional<std::string> url_host(std::string_view url) {
    auto r = host_range(url);
    if (!r) {
        return std::nullopt;
    }
    return std::string(url.substr(r->first, r->second - r->first));
}

std::string defang(std::string_view raw, IocKind kind) {
    switch (kind) {
        case IocKind::FilePath:
            return std::string(raw);
        case IocKind::Domain:
        case IocKind::Ip:
            return dots_bracketed(raw);
        case IocKind::Url:
            break;
    }
    std::string out(raw);
    const std::string lower = to_lower(raw);
    if (lower.starts_with("http")) {
        out.replace(0, 4, out.substr(0, 1) + (std::isupper(static_cast<unsigned char>(out[1])) ? "XX" : "xx") +
                              out.substr(3, 1));
    } else if (lower.starts_with("ftp")) {
        out.replace(1, 1, std::isupper(static_cast<unsigned char>(out[1])) ? "X" : "x");
    }
    if (auto r = host_range(out)) {
        const std::string host = out.substr(r->first, r->second - r->first);
        out.replace(r->first, host.size(), dots_bracketed(host));
    }
    return out;
}

std::string refang(std::string_view text) {
    std::string s(text);
    s = replace_all(std::move(s), "[.]", ".");
    s = replace_all(std::move(s), "(.)", ".");
    s = replace_all(std::move(s), "{.}", ".");
    s = replace_all(std::move(s), "[:]", ":");
    s = replace_all(std::move(s), "[://]", "://");
    static const std::regex hxxp(R"(\b([hH])[xX]{2}([pP][sS]?)(?=:))");
    s = std::regex_replace(s, hxxp, "$1tt$2");
    static const std::regex fxp(R"(\b([fF])[xX]([pP])(?=:))");
    s = std::regex_replace(s, fxp, "$1t$2");
    return s;
}

std::vector<Ioc> extract_iocs(const std::vector<ActionRecord>& actions, std::string_view final_script,
                              const std::vector<std::string>& dropped_paths) {
    std::vector<Ioc> out;
    auto add = [&](IocKind kind, const std::string& raw) {
        if (raw.empty()) return;
        const bool dup = std::any_of(out.begin(), out.end(), [&](const Ioc& i) { return i.kind == kind && i.raw == raw; });
        if (!dup) out.push_back({kind, raw, defang(raw, kind)});
    };
    auto add_url = [&](std::string url) {
        while (!url.empty() && std::string_view(".,;:!").find(url.back()) != std::string_view::npos) url.pop_back();
        if (url.find("<?>") != std::string::npos) return;
        const auto host = url_host(url);
        if (!host || host->empty()) return;
        add(IocKind::Url, url);
        add(is_ipv4(*host) ? IocKind::Ip : IocKind::Domain, *host);
    };
    static const std::regex url_re(
        R"(\b(?:[hH][tT]{2}[pP][sS]?|[hH][xX]{2}[pP][sS]?|[fF][tT][pP]|[fF][xX][pP])(?:\[:\]|:)//(?:\[\.\]|\(\.\)|[^\s'"`<>(){}\[\],;|])+)");
    for (const auto& a : actions) {
        if (a.kind != ActionKind::Download) continue;
        const std::string detail = refang(a.detail);
        std::smatch m;
        if (std::regex_search(detail, m, url_re)) {
            add_url(refang(m.str(0)));
        }
    }
    const std::string script(final_script);
    for (auto it = std::sregex_iterator(script.begin(), script.end(), url_re); it != std::sregex_iterator(); ++it) {
        add_url(refang(it->str(0)));
    }
    for (const auto& p : dropped_paths) {
        if (p.find("<?>") == std::string::npos) add(IocKind::FilePath, p);
    }
    return out;
}

}  // namespace psdeob
