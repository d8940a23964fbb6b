#include "sandbox/value.hpp"

#include "psdeob/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace psdeob::sbx {

Value Value::unknown(std::string display) {
    Value v;
    v.kind = Kind::Unknown;
    v.str = std::move(display);
    return v;
}

Value Value::boolean(bool x) {
    Value v;
    v.kind = Kind::Bool;
    v.b = x;
    return v;
}

Value Value::number(double d) {
    Value v;
    v.kind = Kind::Number;
    v.num = d;
    return v;
}

Value Value::string(std::string s) {
    Value v;
    v.kind = Kind::String;
    v.str = std::move(s);
    return v;
}

Value Value::bytes(std::string raw) {
    Value v;
    v.kind = Kind::Bytes;
    v.str = std::move(raw);
    return v;
}

Value Value::array(std::vector<Value> items) {
    Value v;
    v.kind = Kind::Array;
    for (const auto& it : items) {
        inherit(v, it);
    }
    v.items = std::move(items);
    return v;
}

Value Value::object(std::shared_ptr<Object> o) {
    Value v;
    v.kind = Kind::Object;
    v.obj = std::move(o);
    return v;
}

Value Value::type(std::string name) {
    Value v;
    v.kind = Kind::Type;
    v.str = std::move(name);
    return v;
}

std::shared_ptr<Object> make_object(std::string type) {
    auto o = std::make_shared<Object>();
    o->type = std::move(type);
    return o;
}

void inherit(Value& to, const Value& from) {
    to.env.insert(from.env.begin(), from.env.end());
    if (from.downloaded) {
        to.downloaded = true;
        if (to.url.empty()) {
            to.url = from.url;
        }
    }
}

bool is_known(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Unknown:
            return false;
        case Value::Kind::Array:
            for (const auto& it : v.items) {
                if (!is_known(it)) {
                    return false;
                }
            }
            return true;
        case Value::Kind::Object:
            return !v.obj || v.obj->data_known;
        default:
            return true;
    }
}

std::string format_number(double d) {
    if (std::isnan(d)) {
        return "NaN";
    }
    if (std::isinf(d)) {
        return d > 0 ? "Infinity" : "-Infinity";
    }
    if (d == std::floor(d) && std::fabs(d) < 1e15) {
        return std::to_string(static_cast<long long>(d));
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", d);
    return buf;
}

std::string to_str(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Null:
            return {};
        case Value::Kind::Unknown:
            return v.str.empty() ? std::string("<?>") : v.str;
        case Value::Kind::Bool:
            return v.b ? "True" : "False";
        case Value::Kind::Number:
            return format_number(v.num);
        case Value::Kind::String:
            return v.str;
        case Value::Kind::Bytes: {
            std::string out;
            for (std::size_t i = 0; i < v.str.size(); ++i) {
                if (i) out += ' ';
                out += std::to_string(static_cast<unsigned char>(v.str[i]));
            }
            return out;
        }
        case Value::Kind::Array: {
            std::string out;
            for (std::size_t i = 0; i < v.items.size(); ++i) {
                if (i) out += ' ';
                out += to_str(v.items[i]);
            }
            return out;
        }
        case Value::Kind::Object:
            if (v.obj && v.obj->type == "commandinfo") {
                auto it = v.obj->props.find("name");
                return it == v.obj->props.end() ? std::string() : to_str(it->second);
            }
            if (v.obj && (v.obj->type == "variableinfo" || v.obj->type == "match")) {
                auto it = v.obj->props.find("value");
                return it == v.obj->props.end() ? std::string() : to_str(it->second);
            }
            return v.obj ? "System." + v.obj->type : std::string();
        case Value::Kind::Block:
            return v.block_source;
        case Value::Kind::Type:
            return v.str;
    }
    return {};
}

std::optional<double> to_number(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Null:
            return 0.0;
        case Value::Kind::Bool:
            return v.b ? 1.0 : 0.0;
        case Value::Kind::Number:
            return v.num;
        case Value::Kind::String: {
            std::string s = v.str;
            const auto a = s.find_first_not_of(" \t\r\n");
            if (a == std::string::npos) {
                return 0.0;
            }
            s = s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
            try {
                std::size_t used = 0;
                if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
                    const double d = static_cast<double>(std::stoull(s.substr(2), &used, 16));
                    if (used == s.size() - 2) {
                        return d;
                    }
                    return std::nullopt;
                }
                const double d = std::stod(s, &used);
                if (used == s.size()) {
                    return d;
                }
            } catch (const std::exception&) {
            }
            return std::nullopt;
        }
        default:
            return std::nullopt;
    }
}

bool truthy(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Null:
            return false;
        case Value::Kind::Bool:
            return v.b;
        case Value::Kind::Number:
            return v.num != 0;
        case Value::Kind::String:
            return !v.str.empty();
        case Value::Kind::Bytes:
            return !v.str.empty();
        case Value::Kind::Array:
            if (v.items.size() == 1) {
                return truthy(v.items[0]);
            }
            return !v.items.empty();
        default:
            return true;
    }
}

std::vector<Value> enumerate(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Null:
            return {};
        case Value::Kind::Array:
            return v.items;
        case Value::Kind::Bytes: {
            std::vector<Value> out;
            out.reserve(v.str.size());
            for (char c : v.str) {
                Value n = Value::number(static_cast<unsigned char>(c));
                inherit(n, v);
                out.push_back(std::move(n));
            }
            return out;
        }
        default:
            return {v};
    }
}

Value collapse(std::vector<Value> out) {
    if (out.empty()) {
        return Value::null();
    }
    if (out.size() == 1) {
        return std::move(out[0]);
    }
    return Value::array(std::move(out));
}

namespace {

bool wildcard_at(std::string_view p, std::string_view t) {
    std::size_t pi = 0;
    std::size_t ti = 0;
    std::size_t star_p = std::string_view::npos;
    std::size_t star_t = 0;
    auto lower = [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); };
    while (ti < t.size()) {
        if (pi < p.size() && p[pi] == '*') {
            star_p = pi++;
            star_t = ti;
            continue;
        }
        if (pi < p.size() && p[pi] == '[') {
            const auto close = p.find(']', pi + 1);
            if (close != std::string_view::npos) {
                const std::string_view set = p.substr(pi + 1, close - pi - 1);
                bool hit = false;
                for (std::size_t k = 0; k < set.size(); ++k) {
                    if (k + 2 < set.size() && set[k + 1] == '-') {
                        if (lower(t[ti]) >= lower(set[k]) && lower(t[ti]) <= lower(set[k + 2])) hit = true;
                        k += 2;
                    } else if (lower(set[k]) == lower(t[ti])) {
                        hit = true;
                    }
                }
                if (hit) {
                    pi = close + 1;
                    ++ti;
                    continue;
                }
            }
        } else if (pi < p.size() && (p[pi] == '?' || lower(p[pi]) == lower(t[ti]))) {
            ++pi;
            ++ti;
            continue;
        }
        if (star_p == std::string_view::npos) {
            return false;
        }
        pi = star_p + 1;
        ti = ++star_t;
    }
    while (pi < p.size() && p[pi] == '*') ++pi;
    return pi == p.size();
}

}  // namespace

bool wildcard_match(std::string_view pattern, std::string_view text) { return wildcard_at(pattern, text); }

std::string normalize_type(std::string_view name) {
    std::string t = to_lower(name);
    t.erase(std::remove(t.begin(), t.end(), ' '), t.end());
    if (t.starts_with("system.")) {
        t.erase(0, 7);
    }
    return t;
}

std::string char_string(double cp) {
    std::string out;
    if (cp < 0 || cp > 0x10FFFF || std::isnan(cp)) {
        text::append_utf8(out, 0xFFFD);
        return out;
    }
    const auto c = static_cast<char32_t>(cp);
    if (c == 0) {
        return std::string(1, '\0');
    }
    text::append_utf8(out, (c >= 0xD800 && c <= 0xDFFF) ? char32_t{0xFFFD} : c);
    return out;
}

namespace {

std::size_t utf8_len(unsigned char b) {
    if (b < 0x80) return 1;
    if ((b & 0xE0) == 0xC0) return 2;
    if ((b & 0xF0) == 0xE0) return 3;
    if ((b & 0xF8) == 0xF0) return 4;
    return 1;
}

}  // namespace

long first_code_point(std::string_view s) {
    if (s.empty()) {
        return -1;
    }
    const auto b0 = static_cast<unsigned char>(s[0]);
    const std::size_t n = std::min(utf8_len(b0), s.size());
    if (n == 1) {
        return b0;
    }
    long cp = b0 & (0xFF >> (n + 1));
    for (std::size_t i = 1; i < n; ++i) {
        cp = (cp << 6) | (static_cast<unsigned char>(s[i]) & 0x3F);
    }
    return cp;
}

std::vector<std::string> utf8_chars(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const std::size_t n = std::min(utf8_len(static_cast<unsigned char>(s[i])), s.size() - i);
        out.emplace_back(s.substr(i, n));
        i += n;
    }
    return out;
}

}  // namespace psdeob::sbx
