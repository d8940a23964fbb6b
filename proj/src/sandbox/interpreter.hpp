// Internal: the emulator. Core evaluation lives in interpreter.cpp; the
// intercepted cmdlets, methods and static members in builtins.cpp.

#pragma once

#include "psdeob/sandbox.hpp"
#include "sandbox/ast.hpp"
#include "sandbox/value.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace psdeob::sbx {

// Control-flow signals. Deliberately not derived from std::exception so
// the per-statement error guard never swallows them.
struct BreakSignal {};
struct ContinueSignal {};
struct ReturnSignal {
    Value value;
};
struct ExitSignal {};
struct ThrowSignal {
    Value value;
};
struct BudgetSignal {};

/// Arguments of one command invocation after binding.
struct Args {
    std::vector<Value> positional;
    std::vector<std::pair<std::string, Value>> named;  ///< lowercase names without '-'

    /// Named parameter whose written name is an abbreviation of one of
    /// @p names (or exactly one of them).
    const Value* named_arg(std::initializer_list<std::string_view> names) const;
    bool has_switch(std::initializer_list<std::string_view> names) const;
    /// Named value if present, else the positional at @p index.
    std::optional<Value> get(std::initializer_list<std::string_view> names, std::size_t index) const;
    std::vector<Value> all_values() const;
};

class Interpreter {
public:
    Interpreter(int stage_index, std::size_t budget);

    /// Run a top-level script. Throws BudgetSignal.
    void run(const std::string& source);

    EmulationResult result;

    // --- used by builtins.cpp ---------------------------------------------
    void tick();
    void add_action(ActionKind kind, const Value& detail);
    void add_action(ActionKind kind, std::string detail, bool resolved = true);
    void warn(std::string message);
    /// Evaluate a string as code (the Invoke-Expression interception).
    void do_eval(const Value& code);

    Value lookup(const std::string& name, Span span);
    void assign_var(const std::string& name, Value v);
    Value read_env(const std::string& name, Span span);
    void write_env(const std::string& name, const Value& v);

    std::vector<Value> call_block(const Value& block, const std::vector<Value>& args,
                                  const std::vector<Value>* input = nullptr);
    /// Run a script block in the current scope with `$_` bound to @p item.
    std::vector<Value> run_with_item(const Value& block, const Value& item);

    std::optional<std::vector<Value>> builtin_command(const std::string& name, const Args& args,
                                                      const std::vector<Value>* input, Span span);
    /// Commands that start processes get their arguments evaluated in
    /// ProcessArg context.
    static bool is_process_command(const std::string& canonical);
    static std::string canonical_command(const std::string& lower);
    static const std::map<std::string, std::string>& builtin_aliases();
    /// Variables visible from the current scope plus the automatic ones,
    /// as (name, value) pairs.
    std::vector<std::pair<std::string, Value>> visible_variables() const;
    Value expand(const std::string& text) { return expand_string("\"" + text + "\"", cur_span_); }
    bool is_external_program(const std::string& name) const;
    std::vector<Value> run_external(const std::string& name, const Args& args, Span span);

    Value create_object(const std::string& type, const std::vector<Value>& ctor_args);
    Value call_method(Value target, const std::string& name, std::vector<Value> args);
    Value get_member(const Value& target, const std::string& name);
    Value call_static(const std::string& type, const std::string& name, std::vector<Value> args,
                      const Node* node);
    Value get_static(const std::string& type, const std::string& name);
    Value cast(const std::string& type, const Value& v);
    Value binary_op(const std::string& op, const Value& l, const Value& r);

    /// Classify pending environment-variable reads against the values
    /// they flowed into.
    void settle(const std::vector<const Value*>& values);
    void settle(const Value& v) { settle(std::vector<const Value*>{&v}); }

    std::map<std::string, std::string> user_aliases;
    int process_arg_depth = 0;

private:
    int stage_index_;
    std::size_t budget_;
    std::vector<std::map<std::string, Value>> scopes_;
    std::map<std::string, std::shared_ptr<const Node>> functions_;
    std::map<std::string, Value> env_overrides_;
    std::vector<NodePtr> keep_alive_;
    std::vector<std::size_t> pending_env_;
    std::vector<std::string> pending_render_;
    Span cur_span_;
    int depth_ = 0;

    void exec_block(const Node& block, std::vector<Value>& out);
    void exec_stmt(const Node& s, std::vector<Value>& out);
    void exec_assign(const Node& s);
    Value eval(const Node& e);
    std::vector<Value> run_pipeline(const Node& p);
    std::vector<Value> run_command(const Node& cmd, const std::vector<Value>* input);
    std::vector<Value> call_function(const Node& fn, const Args& args, const std::vector<Value>* input);
    Value eval_condition(const Node& c, bool& known);
    Value expand_string(const std::string& raw, Span span);
    Value index_value(const Value& base, const Value& idx);
    Value unary_op(const std::string& op, const Node& operand);
    Value format_op(const Value& fmt, const Value& args);
    void run_nested(const std::string& code);
    Args bind_args(const Node& cmd, std::size_t first_arg);
};

/// Base name of a path without directory, quotes or extension, lowercase.
std::string program_stem(std::string_view path);
bool is_shell_program(std::string_view path);

}  // namespace psdeob::sbx
