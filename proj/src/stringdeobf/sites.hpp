// Internal: site finders shared by the string transforms and the detector.
// A technique is reported by the detector exactly when its finder returns
// at least one site, so a transform pass that reaches a fixed point always
// leaves a script the detector calls Clean.

#pragma once

#include "psdeob/psmodel.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace psdeob::sdo {

struct Edit {
    Span span;
    std::string replacement;
};

/// Token stream plus the indexes the finders need.
class View {
public:
    explicit View(std::string_view src);  // throws TokenizeError

    std::string_view src;
    std::vector<Token> toks;
    std::vector<std::size_t> sig;   ///< indexes of non-whitespace, non-comment tokens
    std::vector<long> sig_of;       ///< token index -> sig index, -1 for trivia
    std::vector<long> match;        ///< bracket partner token index, -1 if none
    std::vector<int> depth;         ///< paren/brace/bracket nesting depth at each token

    std::size_t nsig() const { return sig.size(); }
    const Token& s(long j) const { return toks[sig[static_cast<std::size_t>(j)]]; }
    bool valid(long j) const { return j >= 0 && j < static_cast<long>(sig.size()); }
    /// Raw (possibly trivia) token right before / after sig token j.
    const Token* raw_before(long j) const;
    const Token* raw_after(long j) const;
};

std::vector<Edit> concat_sites(const View& v);
std::vector<Edit> reorder_sites(const View& v, std::vector<std::string>* warnings);
std::vector<Edit> tick_sites(const View& v);
std::vector<Edit> eval_sites(const View& v);
/// Eval targets whose parenthesized argument folds to a command name.
std::vector<Span> eval_evidence(const View& v);
std::vector<Edit> case_sites(const View& v);
/// Normalization edits for in-line whitespace runs of two or more.
std::vector<Edit> ws_sites(const View& v);
/// In-line runs of three or more: the detection threshold.
std::vector<Span> ws_evidence(const View& v);

/// Apply non-overlapping edits (overlaps are dropped, earliest wins).
std::string apply_edits(std::string_view src, std::vector<Edit> edits);

/// Result of evaluating a `'{..}' -f args` format string.
struct FormatResult {
    bool ok = false;
    std::string value;
    std::string error;
};
FormatResult apply_format(std::string_view fmt, const std::vector<std::string>& args);

bool is_keyword(std::string_view word);
bool is_command_name(std::string_view value);

}  // namespace psdeob::sdo
