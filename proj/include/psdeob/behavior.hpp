/// @file behavior.hpp
/// @brief What a de-obfuscated script does: its behavioral pattern, the
/// environment variables it reads, and the indicators of compromise it
/// contains.

#pragma once

#include "psdeob/sandbox.hpp"

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace psdeob {

enum class BehavioralPattern { DownExec, DownShell, ExecShell, ExecVar, ShellKill, MemExec, Unclassified };

inline constexpr BehavioralPattern kClassifiedPatterns[] = {
    BehavioralPattern::DownExec, BehavioralPattern::DownShell, BehavioralPattern::ExecShell,
    BehavioralPattern::ExecVar,  BehavioralPattern::ShellKill, BehavioralPattern::MemExec,
};

std::string_view to_string(BehavioralPattern p);

/// The action kinds that make up a classified pattern (empty for
/// Unclassified).
std::set<ActionKind> pattern_action_set(BehavioralPattern p);

/// The pattern whose action set equals the set of kinds in @p actions
/// exactly, or Unclassified.
BehavioralPattern classify_pattern(const std::vector<ActionRecord>& actions);
BehavioralPattern classify_pattern(const std::set<ActionKind>& kinds);

struct EnvVarStat {
    std::string name;
    EnvUsage usage = EnvUsage::Other;
    std::size_t count = 0;
    bool operator==(const EnvVarStat&) const = default;
};

/// Group uses by (name, usage), counted, in order of first appearance.
/// Names compare case-insensitively and are reported uppercase.
std::vector<EnvVarStat> extract_env_vars(const std::vector<EnvVarUse>& uses);

enum class IocKind { Url, Domain, Ip, FilePath };

std::string_view to_string(IocKind kind);

struct Ioc {
    IocKind kind = IocKind::Url;
    std::string raw;
    std::string defanged;
    bool operator==(const Ioc&) const = default;
};

/// Display form: `http`->`hxxp`, `ftp`->`fxp`, and dots of the host part
/// become `[.]`. File paths are returned unchanged.
std::string defang(std::string_view raw, IocKind kind);

/// Undo both this library's defanging and common variants (`[.]`, `(.)`,
/// `[:]`, `hxxp`, `fxp`).
std::string refang(std::string_view text);

/// Host part of a URL (no scheme, credentials, port or path).
std::optional<std::string> url_host(std::string_view url);

/// URLs from Download actions and URL-shaped text in @p final_script
/// (defanged spellings included), the domains and IPs they name, and
/// @p dropped_paths. Deduplicated in order of first appearance.
std::vector<Ioc> extract_iocs(const std::vector<ActionRecord>& actions, std::string_view final_script,
                              const std::vector<std::string>& dropped_paths);

}  // namespace psdeob
