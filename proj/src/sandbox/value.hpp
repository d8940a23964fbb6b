// Internal: runtime values of the emulator.

#pragma once

#include "sandbox/ast.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace psdeob::sbx {

struct Object;

struct Value {
    enum class Kind { Null, Unknown, Bool, Number, String, Bytes, Array, Object, Block, Type };

    Kind kind = Kind::Null;
    bool b = false;
    double num = 0;
    /// String text, raw bytes, type name, or for Unknown the best-effort
    /// rendering with unresolved parts shown as `<?>`.
    std::string str;
    std::vector<Value> items;
    std::shared_ptr<Object> obj;
    std::shared_ptr<const Node> block;  ///< ScriptBlock node
    std::string block_source;           ///< text of a script block

    /// Environment variables whose value flowed into this one.
    std::set<std::string> env;
    /// Content produced by a download, with its URL.
    bool downloaded = false;
    std::string url;

    static Value null() { return {}; }
    static Value unknown(std::string display = "<?>");
    static Value boolean(bool v);
    static Value number(double v);
    static Value string(std::string s);
    static Value bytes(std::string raw);
    static Value array(std::vector<Value> items);
    static Value object(std::shared_ptr<Object> o);
    static Value type(std::string name);

    bool is(Kind k) const { return kind == k; }
};

/// A .NET-like object; behaviour is keyed on `type` (lowercase, no
/// `system.` prefix).
struct Object {
    std::string type;
    std::map<std::string, Value> props;  ///< lowercase keys
    /// Payload carried by streams: raw bytes, or readable text.
    std::optional<std::string> data;
    bool data_known = true;
};

std::shared_ptr<Object> make_object(std::string type);

/// Copy provenance (env names, download taint) from @p from into @p to.
void inherit(Value& to, const Value& from);

/// True if no Unknown appears anywhere inside @p v.
bool is_known(const Value& v);

/// PowerShell-style string conversion. Unknown parts render as `<?>`.
std::string to_str(const Value& v);

std::string format_number(double d);

std::optional<double> to_number(const Value& v);

bool truthy(const Value& v);

/// Enumerate for pipelines and loops: arrays yield items, bytes yield
/// numbers, null yields nothing, anything else yields itself.
std::vector<Value> enumerate(const Value& v);

/// Collapse pipeline output: none -> null, one -> itself, many -> array.
Value collapse(std::vector<Value> out);

/// Wildcard match with `*`, `?` and `[abc]`, case-insensitive.
bool wildcard_match(std::string_view pattern, std::string_view text);

/// Normalize a type name: lowercase, drop leading `system.`.
std::string normalize_type(std::string_view name);

/// Append the UTF-8 encoding of @p cp (invalid values become U+FFFD).
std::string char_string(double cp);

/// First code point of a UTF-8 string, or -1.
long first_code_point(std::string_view s);

/// Split UTF-8 text into one string per code point.
std::vector<std::string> utf8_chars(std::string_view s);

}  // namespace psdeob::sbx
