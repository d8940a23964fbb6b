#include "psdeob/psmodel.hpp"
#include "psdeob/text.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

namespace psdeob {

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
        throw std::runtime_error("sha256 digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0x0F]);
    }
    return out;
}

ScriptText ScriptText::from_text(std::string content, std::string source_id) {
    ScriptText s;
    s.sha256 = sha256_hex(content);
    s.content = std::move(content);
    s.source_id = std::move(source_id);
    return s;
}

ScriptText ScriptText::derive(std::string new_content) const {
    ScriptText s = from_text(std::move(new_content), source_id);
    return s;
}

ScriptText ingest_bytes(std::string_view raw, std::string source_id) {
    ScriptText s;
    s.source_id = std::move(source_id);
    s.sha256 = sha256_hex(raw);

    std::size_t replaced = 0;
    const auto starts = [&](std::string_view prefix) { return raw.substr(0, prefix.size()) == prefix; };
    if (starts("\xEF\xBB\xBF")) {
        s.content = text::sanitize_utf8(raw.substr(3), &replaced);
    } else if (starts("\xFF\xFE")) {
        s.content = text::utf16_to_utf8(raw.substr(2), false, &replaced);
        s.notes.push_back("decoded as UTF-16LE (byte order mark)");
    } else if (starts("\xFE\xFF")) {
        s.content = text::utf16_to_utf8(raw.substr(2), true, &replaced);
        s.notes.push_back("decoded as UTF-16BE (byte order mark)");
    } else if (text::has_alternating_nul(raw)) {
        s.content = text::utf16_to_utf8(raw, false, &replaced);
        s.notes.push_back("decoded as UTF-16LE (alternating NUL bytes)");
    } else {
        s.content = text::sanitize_utf8(raw, &replaced);
    }
    if (replaced > 0) {
        s.notes.push_back("replaced " + std::to_string(replaced) +
                          " invalid byte sequence(s) with U+FFFD");
    }
    return s;
}

}  // namespace psdeob
