/// @file stringdeobf.hpp
/// @brief Transforms that undo string-level obfuscation, one per technique,
/// plus the fixed-point driver that alternates them.

#pragma once

#include "psdeob/psmodel.hpp"

#include <string>
#include <vector>

namespace psdeob {

/// Fold `'a' + 'b'` chains of literals, inlining single-assignment
/// string variables that are only ever used as chain operands.
ScriptText deobf_concat(const ScriptText& script);

/// Evaluate `'{1}{0}' -f 'x','y'` over literal arguments. Malformed
/// format strings stay in place and produce a message in @p warnings.
ScriptText deobf_reorder(const ScriptText& script, std::vector<std::string>* warnings = nullptr);

/// Drop backticks that escape nothing: inside bare words, and inside
/// double-quoted strings where the escaped character is not special.
ScriptText deobf_tick(const ScriptText& script);

/// `&('Name')` / `.('Name')` become the bare command `Name`.
ScriptText deobf_eval(const ScriptText& script);

/// Canonical cmdlet casing and single-space separation between tokens.
ScriptText normalize_case_ws(const ScriptText& script);

struct StringPassResult {
    ScriptText output;
    std::vector<TechniqueTag> techniques;  ///< union over iterations, enum order
    std::vector<std::string> warnings;
    int iterations = 0;
    bool changed = false;
};

/// Run concat, reorder, tick, eval, case/ws in that order until nothing
/// changes (or @p max_iterations passes).
StringPassResult deobfuscate_strings(const ScriptText& script, int max_iterations = 100);

/// Sum of live sites across all string techniques; a transform pass that
/// changes the script strictly lowers it.
std::size_t string_obfuscation_measure(const ScriptText& script);

}  // namespace psdeob
