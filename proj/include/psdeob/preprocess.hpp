/// @file preprocess.hpp
/// @brief Pre-processing applied before each detection pass (line joining,
/// garbage cleanup, delimiter check) and anti-debugging removal applied
/// after each peel.

#pragma once

#include "psdeob/psmodel.hpp"

#include <optional>
#include <string>
#include <vector>

namespace psdeob {

/// Merge line continuations so each logical command sits on one line:
/// backtick-newline, and line breaks after `|`, `+`, `,`, `(`, `{`, `[`.
/// A single space replaces each continuation.
ScriptText join_multiline(const ScriptText& script);

/// Strip NULs, U+FFFD, stray control characters, launcher prefixes
/// (`cmd /c`, `powershell.exe -NoProfile ... -Command`) and unbalanced
/// quote artifacts left by macro extraction. `-EncodedCommand <blob>` is
/// kept so the detector can see it.
ScriptText cleanup(const ScriptText& script);

struct SyntaxError {
    std::string detail;
    std::size_t offset = 0;
};

/// Delimiter balance and tokenizability. Empty scripts fail.
std::optional<SyntaxError> syntax_check(const ScriptText& script);

enum class AntiDebug { Sleep, OutNullRedirect, InfiniteLoop, TryCatch };

std::string_view to_string(AntiDebug kind);

struct AntiDebugRemoval {
    AntiDebug kind;
    /// Region replaced, in the coordinates of the script as it was just
    /// before this removal (removals are applied one at a time).
    Span span;
    std::string replacement;
};

struct AntiDebugResult {
    ScriptText script;
    std::vector<AntiDebugRemoval> removed;
};

/// Remove sleeps, `| Out-Null` tails, constant-true loops without an exit,
/// and unwrap try/catch to the try body (plus any finally body). Runs to a
/// fixed point; a removal that would break syntax_check is not applied.
AntiDebugResult strip_antidebug(const ScriptText& script);

}  // namespace psdeob
