#include "psdeob/decoder.hpp"

#include "psdeob/text.hpp"

#include <zlib.h>

#include <array>
#include <cstdint>
#include <optional>

namespace psdeob {

std::string_view to_string(DecodeErrorKind kind) {
    switch (kind) {
        case DecodeErrorKind::InvalidBase64: return "InvalidBase64";
        case DecodeErrorKind::UndecodableBytes: return "UndecodableBytes";
        case DecodeErrorKind::MalformedGroup: return "MalformedGroup";
        case DecodeErrorKind::CorruptStream: return "CorruptStream";
        case DecodeErrorKind::PayloadNotFound: return "PayloadNotFound";
    }
    return "CorruptStream";
}

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

bool is_blank(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

constexpr double kPrintableThreshold = 0.9;

std::optional<std::string> accept(std::string text) {
    if (text.empty() || text::printable_ratio(text) < kPrintableThreshold) {
        return std::nullopt;
    }
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        if (c != '\0') {
            out.push_back(c);
        }
    }
    return out;
}

}  // namespace

std::string base64_decode_bytes(std::string_view blob) {
    std::string compact;
    compact.reserve(blob.size());
    for (char c : blob) {
        if (!is_blank(c)) {
            compact.push_back(c);
        }
    }
    if (compact.empty() || compact.size() % 4 != 0) {
        throw DecodeError(DecodeErrorKind::InvalidBase64, "base64 length is not a positive multiple of 4");
    }
    std::size_t pad = 0;
    while (pad < compact.size() && compact[compact.size() - 1 - pad] == '=') ++pad;
    if (pad > 2) {
        throw DecodeError(DecodeErrorKind::InvalidBase64, "too much base64 padding");
    }
    std::string out;
    out.reserve(compact.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    for (std::size_t i = 0; i + pad < compact.size(); ++i) {
        const int v = b64_value(compact[i]);
        if (v < 0) {
            throw DecodeError(DecodeErrorKind::InvalidBase64,
                              "invalid base64 character at offset " + std::to_string(i));
        }
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<char>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

std::string base64_encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                       (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8) |
                       static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 2]));
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out.push_back(kAlphabet[(n >> 6) & 63]);
        out.push_back(kAlphabet[n & 63]);
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const auto n = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16;
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out += "==";
    } else if (rest == 2) {
        const auto n = (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << 16) |
                       (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i + 1])) << 8);
        out.push_back(kAlphabet[(n >> 18) & 63]);
        out.push_back(kAlphabet[(n >> 12) & 63]);
        out.push_back(kAlphabet[(n >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::string bytes_to_text(std::string_view bytes, Base64Context ctx) {
    bool utf16_first = ctx == Base64Context::EncodedCommandFlag;
    if (bytes.substr(0, 3) == "\xEF\xBB\xBF") {
        bytes.remove_prefix(3);
        utf16_first = false;
    } else if (bytes.substr(0, 2) == "\xFF\xFE") {
        bytes.remove_prefix(2);
        utf16_first = true;
    }
    utf16_first = utf16_first || text::has_alternating_nul(bytes);
    bool tried16 = false;
    if (utf16_first && bytes.size() % 2 == 0) {
        tried16 = true;
        if (auto t = accept(text::utf16_to_utf8(bytes))) {
            return *t;
        }
    }
    std::size_t bad = 0;
    std::string utf8 = text::sanitize_utf8(bytes, &bad);
    if (auto t = accept(std::move(utf8))) {
        return *t;
    }
    if (!tried16 && bytes.size() >= 2 && bytes.size() % 2 == 0) {
        if (auto t = accept(text::utf16_to_utf8(bytes))) {
            return *t;
        }
    }
    throw DecodeError(DecodeErrorKind::UndecodableBytes,
                      "decoded payload is not text (" + std::to_string(bytes.size()) + " bytes)",
                      std::string(bytes));
}

ScriptText decode_base64(std::string_view blob, Base64Context ctx) {
    return ScriptText::from_text(bytes_to_text(base64_decode_bytes(blob), ctx));
}

std::string binary_decode_bytes(std::string_view blob) {
    std::string out;
    std::size_t i = 0;
    bool any = false;
    while (i < blob.size()) {
        const char c = blob[i];
        if (is_blank(c) || c == ',') {
            ++i;
            continue;
        }
        std::size_t e = i;
        while (e < blob.size() && !is_blank(blob[e]) && blob[e] != ',') ++e;
        const std::string_view group = blob.substr(i, e - i);
        if (group.size() % 8 != 0) {
            throw DecodeError(DecodeErrorKind::MalformedGroup,
                              "binary group of " + std::to_string(group.size()) + " bits at offset " +
                                  std::to_string(i));
        }
        for (std::size_t g = 0; g < group.size(); g += 8) {
            unsigned v = 0;
            for (std::size_t b = 0; b < 8; ++b) {
                const char bit = group[g + b];
                if (bit != '0' && bit != '1') {
                    throw DecodeError(DecodeErrorKind::MalformedGroup,
                                      "non-binary digit at offset " + std::to_string(i + g + b));
                }
                v = (v << 1) | static_cast<unsigned>(bit - '0');
            }
            out.push_back(static_cast<char>(v));
        }
        any = true;
        i = e;
    }
    if (!any) {
        throw DecodeError(DecodeErrorKind::MalformedGroup, "no binary groups");
    }
    return out;
}

ScriptText decode_binary(std::string_view blob) {
    return ScriptText::from_text(bytes_to_text(binary_decode_bytes(blob), Base64Context::BareBlob));
}

namespace {

std::optional<std::string> run_inflate(std::string_view payload, int window_bits) {
    z_stream zs{};
    if (inflateInit2(&zs, window_bits) != Z_OK) {
        return std::nullopt;
    }
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(payload.data()));
    zs.avail_in = static_cast<uInt>(payload.size());
    std::string out;
    std::array<char, 16384> buf{};
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = reinterpret_cast<Bytef*>(buf.data());
        zs.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            return std::nullopt;
        }
        const std::size_t produced = buf.size() - zs.avail_out;
        out.append(buf.data(), produced);
        if (out.size() > kMaxInflatedBytes) {
            inflateEnd(&zs);
            return std::nullopt;
        }
        if (rc == Z_OK && produced == 0 && zs.avail_in == 0) {
            // Input exhausted before the end-of-stream marker.
            inflateEnd(&zs);
            return std::nullopt;
        }
    }
    inflateEnd(&zs);
    return out;
}

}  // namespace

std::string inflate_bytes(std::string_view payload, LayerType::Compression kind) {
    std::optional<std::string> out;
    if (kind == LayerType::Compression::Gzip) {
        out = run_inflate(payload, 16 + MAX_WBITS);
    } else {
        out = run_inflate(payload, -MAX_WBITS);
        if (!out) {
            out = run_inflate(payload, MAX_WBITS);
        }
    }
    if (!out) {
        throw DecodeError(DecodeErrorKind::CorruptStream,
                          std::string(kind == LayerType::Compression::Gzip ? "gzip" : "deflate") +
                              " stream could not be decompressed");
    }
    return *out;
}

ScriptText decompress(std::string_view payload, LayerType::Compression kind) {
    return ScriptText::from_text(bytes_to_text(inflate_bytes(payload, kind), Base64Context::FromBase64Call));
}

ScriptText peel(const ScriptText& script, const LayerFinding& finding) {
    if (!finding.payload) {
        throw DecodeError(DecodeErrorKind::PayloadNotFound,
                          "no literal payload found for " + describe(finding.layer) + " layer");
    }
    const auto& p = *finding.payload;
    ScriptText out;
    switch (finding.layer.variant) {
        case LayerType::Variant::Compressed:
            out = decompress(base64_decode_bytes(p.blob), *finding.layer.compression);
            break;
        case LayerType::Variant::Encoded:
            if (finding.layer.encoding == LayerType::Encoding::Binary) {
                out = decode_binary(p.blob);
            } else {
                out = decode_base64(p.blob, p.context);
            }
            break;
        default:
            throw DecodeError(DecodeErrorKind::PayloadNotFound, "layer " + describe(finding.layer) + " has no payload");
    }
    return script.derive(std::move(out.content));
}

}  // namespace psdeob
