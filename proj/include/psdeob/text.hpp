/// @file text.hpp
/// @brief Byte/text conversions used when ingesting scripts and decoding
/// embedded payloads.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace psdeob::text {

/// Decode UTF-8, replacing invalid sequences with U+FFFD.
/// @p replaced receives the number of replacements made.
std::string sanitize_utf8(std::string_view bytes, std::size_t* replaced = nullptr);

/// Decode UTF-16LE (or BE) into UTF-8. A trailing odd byte is dropped;
/// unpaired surrogates become U+FFFD.
std::string utf16_to_utf8(std::string_view bytes, bool big_endian = false,
                          std::size_t* replaced = nullptr);

/// Encode UTF-8 text as UTF-16LE bytes.
std::string utf8_to_utf16le(std::string_view utf8);

/// True when odd-indexed bytes are mostly NUL, the signature of ASCII
/// text stored as UTF-16LE.
bool has_alternating_nul(std::string_view bytes);

/// Fraction of code points in @p utf8 that look like script text:
/// printable ASCII, tab/CR/LF, and Latin/Greek/Cyrillic letters or
/// general punctuation. Empty input scores 0.
double printable_ratio(std::string_view utf8);

/// Append the UTF-8 encoding of @p cp.
void append_utf8(std::string& out, char32_t cp);

/// Truncate to at most @p max_chars code points.
std::string excerpt(std::string_view utf8, std::size_t max_chars);

}  // namespace psdeob::text
