/// @file detector.hpp
/// @brief Layer detection: decide which obfuscation envelope wraps a script.

#pragma once

#include "psdeob/psmodel.hpp"

#include <optional>
#include <string>
#include <vector>

namespace psdeob {

/// Where a Base64 blob was found; steers the text-decoding heuristic.
enum class Base64Context { EncodedCommandFlag, FromBase64Call, BareBlob };

std::string_view to_string(Base64Context ctx);

struct Evidence {
    TechniqueTag technique;
    Span span;

    bool operator==(const Evidence&) const = default;
};

/// The encoded payload of an Encoded or Compressed layer.
struct PayloadLocation {
    Span span;            ///< byte range of the blob inside the script
    std::string blob;     ///< the blob text itself
    Base64Context context = Base64Context::BareBlob;
};

struct LayerFinding {
    LayerType layer;
    std::vector<Evidence> evidence;
    /// 0 = Compressed, 1 = Encoded, 2 = StringBased, 3 = Clean.
    int confidence_rank = 3;
    std::optional<PayloadLocation> payload;
};

/// Classify @p script with precedence Compressed > Encoded > StringBased > Clean.
LayerFinding detect_layer(const ScriptText& script);

/// Every string-layer technique with at least one live site, in enum order.
std::vector<TechniqueTag> detect_string_techniques(const ScriptText& script);

/// Same as detect_string_techniques but with the matched spans.
std::vector<Evidence> string_technique_evidence(const ScriptText& script);

/// True when @p s is shaped like Base64: alphabet only, optional `=`
/// padding, length a multiple of 4 and at least @p min_len.
bool is_base64_shaped(std::string_view s, std::size_t min_len);

}  // namespace psdeob
