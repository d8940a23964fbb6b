/// @file text.cpp
/// @brief UTF-8 / UTF-16 helpers.

#include "psdeob/text.hpp"

namespace psdeob::text {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

/// Decode one UTF-8 sequence at @p i. Returns the code point, or
/// kReplacement with @p len = 1 on malformed input.
char32_t decode_one(std::string_view s, std::size_t i, std::size_t& len) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    len = 1;
    if (b0 < 0x80) {
        return b0;
    }
    std::size_t need = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if ((b0 & 0xE0) == 0xC0) {
        need = 1;
        cp = b0 & 0x1F;
        min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        need = 2;
        cp = b0 & 0x0F;
        min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        need = 3;
        cp = b0 & 0x07;
        min = 0x10000;
    } else {
        return kReplacement;
    }
    for (std::size_t k = 1; k <= need; ++k) {
        if (i + k >= s.size()) {
            return kReplacement;
        }
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            return kReplacement;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        return kReplacement;
    }
    len = need + 1;
    return cp;
}

bool printable(char32_t cp) {
    if (cp == '\t' || cp == '\n' || cp == '\r') {
        return true;
    }
    if (cp >= 0x20 && cp < 0x7F) {
        return true;
    }
    if (cp >= 0xA0 && cp <= 0x52F) {
        return true;
    }
    return cp >= 0x2000 && cp <= 0x206F;
}

}  // namespace

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string sanitize_utf8(std::string_view bytes, std::size_t* replaced) {
    std::string out;
    out.reserve(bytes.size());
    std::size_t bad = 0;
    for (std::size_t i = 0; i < bytes.size();) {
        std::size_t len = 1;
        const char32_t cp = decode_one(bytes, i, len);
        if (cp == kReplacement && len == 1 && static_cast<unsigned char>(bytes[i]) >= 0x80) {
            ++bad;
            append_utf8(out, kReplacement);
        } else {
            out.append(bytes.substr(i, len));
        }
        i += len;
    }
    if (replaced != nullptr) {
        *replaced = bad;
    }
    return out;
}

std::string utf16_to_utf8(std::string_view bytes, bool big_endian, std::size_t* replaced) {
    std::string out;
    out.reserve(bytes.size() / 2);
    std::size_t bad = 0;
    auto unit = [&](std::size_t i) -> char32_t {
        const auto lo = static_cast<unsigned char>(bytes[i]);
        const auto hi = static_cast<unsigned char>(bytes[i + 1]);
        return big_endian ? static_cast<char32_t>((lo << 8) | hi)
                          : static_cast<char32_t>((hi << 8) | lo);
    };
    const std::size_t n = bytes.size() & ~static_cast<std::size_t>(1);
    for (std::size_t i = 0; i < n; i += 2) {
        char32_t u = unit(i);
        if (u >= 0xD800 && u <= 0xDBFF) {
            if (i + 2 < n) {
                const char32_t lo = unit(i + 2);
                if (lo >= 0xDC00 && lo <= 0xDFFF) {
                    append_utf8(out, 0x10000 + ((u - 0xD800) << 10) + (lo - 0xDC00));
                    i += 2;
                    continue;
                }
            }
            ++bad;
            append_utf8(out, kReplacement);
        } else if (u >= 0xDC00 && u <= 0xDFFF) {
            ++bad;
            append_utf8(out, kReplacement);
        } else {
            append_utf8(out, u);
        }
    }
    if (replaced != nullptr) {
        *replaced = bad;
    }
    return out;
}

std::string utf8_to_utf16le(std::string_view utf8) {
    std::string out;
    out.reserve(utf8.size() * 2);
    auto put = [&](char32_t u) {
        out.push_back(static_cast<char>(u & 0xFF));
        out.push_back(static_cast<char>((u >> 8) & 0xFF));
    };
    for (std::size_t i = 0; i < utf8.size();) {
        std::size_t len = 1;
        char32_t cp = decode_one(utf8, i, len);
        i += len;
        if (cp >= 0x10000) {
            cp -= 0x10000;
            put(0xD800 + (cp >> 10));
            put(0xDC00 + (cp & 0x3FF));
        } else {
            put(cp);
        }
    }
    return out;
}

bool has_alternating_nul(std::string_view bytes) {
    if (bytes.size() < 2) {
        return false;
    }
    std::size_t odd = 0;
    std::size_t odd_nul = 0;
    std::size_t even_nul = 0;
    for (std::size_t i = 0; i + 1 < bytes.size(); i += 2) {
        ++odd;
        if (bytes[i + 1] == '\0') {
            ++odd_nul;
        }
        if (bytes[i] == '\0') {
            ++even_nul;
        }
    }
    return odd_nul * 4 >= odd * 3 && even_nul * 2 < odd;
}

double printable_ratio(std::string_view utf8) {
    std::size_t total = 0;
    std::size_t good = 0;
    for (std::size_t i = 0; i < utf8.size();) {
        std::size_t len = 1;
        const char32_t cp = decode_one(utf8, i, len);
        i += len;
        ++total;
        if (cp != kReplacement && printable(cp)) {
            ++good;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(good) / static_cast<double>(total);
}

std::string excerpt(std::string_view utf8, std::size_t max_chars) {
    std::size_t i = 0;
    std::size_t count = 0;
    while (i < utf8.size() && count < max_chars) {
        std::size_t len = 1;
        decode_one(utf8, i, len);
        i += len;
        ++count;
    }
    return std::string(utf8.substr(0, i));
}

}  // namespace psdeob::text
