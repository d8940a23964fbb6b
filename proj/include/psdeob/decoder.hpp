/// @file decoder.hpp
/// @brief Peel Encoded and Compressed layers: Base64, binary strings,
/// raw deflate and gzip.

#pragma once

#include "psdeob/detector.hpp"
#include "psdeob/psmodel.hpp"

#include <stdexcept>
#include <string>
#include <string_view>

namespace psdeob {

enum class DecodeErrorKind { InvalidBase64, UndecodableBytes, MalformedGroup, CorruptStream, PayloadNotFound };

std::string_view to_string(DecodeErrorKind kind);

class DecodeError : public std::runtime_error {
public:
    DecodeError(DecodeErrorKind kind, const std::string& what, std::string bytes = {})
        : std::runtime_error(what), kind_(kind), bytes_(std::move(bytes)) {}

    DecodeErrorKind kind() const { return kind_; }
    /// For UndecodableBytes: the raw payload, so it can be stored as an artifact.
    const std::string& bytes() const { return bytes_; }

private:
    DecodeErrorKind kind_;
    std::string bytes_;
};

/// Standard alphabet, `=` padding required to a multiple of four.
/// ASCII whitespace inside the blob is ignored. Throws InvalidBase64.
std::string base64_decode_bytes(std::string_view blob);
std::string base64_encode(std::string_view bytes);

/// Turn decoded bytes into script text. UTF-16LE is tried first when
/// @p ctx is EncodedCommandFlag or the bytes show alternating NULs, then
/// UTF-8. A candidate is accepted at >= 90% printable code points.
/// NUL characters never survive. Throws UndecodableBytes.
std::string bytes_to_text(std::string_view bytes, Base64Context ctx);

ScriptText decode_base64(std::string_view blob, Base64Context ctx);

/// Groups of eight `0`/`1` characters separated by whitespace or commas.
/// Throws MalformedGroup when a group is not a multiple of eight bits.
std::string binary_decode_bytes(std::string_view blob);
ScriptText decode_binary(std::string_view blob);

/// Raw deflate (retrying once as zlib-wrapped) or gzip. Output is capped
/// at kMaxInflatedBytes. Throws CorruptStream.
std::string inflate_bytes(std::string_view payload, LayerType::Compression kind);
ScriptText decompress(std::string_view payload, LayerType::Compression kind);

inline constexpr std::size_t kMaxInflatedBytes = 64u << 20;

/// Decode the payload named by an Encoded/Compressed finding into the
/// next stage's script. Throws DecodeError (PayloadNotFound when the
/// finding carries no payload location).
ScriptText peel(const ScriptText& script, const LayerFinding& finding);

}  // namespace psdeob
