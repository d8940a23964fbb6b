// Internal: syntax tree for the emulator and the parser that builds it.

#pragma once

#include "psdeob/psmodel.hpp"

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace psdeob::sbx {

enum class NK {
    // statements
    Block,
    Pipeline,
    Command,
    Assign,
    If,
    While,
    DoWhile,
    DoUntil,
    For,
    Foreach,
    Try,
    Function,
    ParamBlock,
    Return,
    Break,
    Continue,
    Exit,
    Throw,
    Nop,
    // expressions
    Str,
    ExpandStr,
    Num,
    Var,
    Array,
    SubExpr,
    ArraySubExpr,
    Paren,
    ScriptBlock,
    Hash,
    Type,
    Cast,
    Unary,
    Binary,
    Member,
    Invoke,
    Index,
    Param,
    Bare,
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    NK k = NK::Nop;
    /// Operator, name, literal value or raw token text depending on kind.
    std::string text;
    double num = 0;
    bool is_static = false;
    std::vector<NodePtr> kids;
    /// Parameter names for ScriptBlock, Function and ParamBlock.
    std::vector<std::string> names;
    Span span;
    /// For ScriptBlock nodes: source text of the body.
    std::string source;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t offset) : std::runtime_error(what), offset(offset) {}
    std::size_t offset;
};

struct ParseResult {
    NodePtr block;
    std::vector<std::string> warnings;
};

/// Parse a whole script. Statements that cannot be parsed are skipped with
/// a warning. Throws TokenizeError for untokenizable input.
ParseResult parse_script(std::string_view source);

}  // namespace psdeob::sbx
