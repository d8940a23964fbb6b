#include "psdeob/psmodel.hpp"

#include <algorithm>
#include <unordered_map>

namespace psdeob {

namespace detail {
extern const std::string_view kCmdletTableText;
}

std::string_view to_string(TokenKind kind) {
    switch (kind) {
        case TokenKind::Variable: return "Variable";
        case TokenKind::CmdletName: return "CmdletName";
        case TokenKind::MethodCall: return "MethodCall";
        case TokenKind::StringLiteralSingle: return "StringLiteralSingle";
        case TokenKind::StringLiteralDouble: return "StringLiteralDouble";
        case TokenKind::Number: return "Number";
        case TokenKind::Operator: return "Operator";
        case TokenKind::FormatOperator: return "FormatOperator";
        case TokenKind::CallOperator: return "CallOperator";
        case TokenKind::DotSourceOperator: return "DotSourceOperator";
        case TokenKind::Semicolon: return "Semicolon";
        case TokenKind::Pipe: return "Pipe";
        case TokenKind::LParen: return "LParen";
        case TokenKind::RParen: return "RParen";
        case TokenKind::LBrace: return "LBrace";
        case TokenKind::RBrace: return "RBrace";
        case TokenKind::Backtick: return "Backtick";
        case TokenKind::Comment: return "Comment";
        case TokenKind::Whitespace: return "Whitespace";
        case TokenKind::Newline: return "Newline";
        case TokenKind::Word: return "Word";
    }
    return "Word";
}

std::string_view to_string(LayerType::Variant v) {
    switch (v) {
        case LayerType::Variant::StringBased: return "StringBased";
        case LayerType::Variant::Encoded: return "Encoded";
        case LayerType::Variant::Compressed: return "Compressed";
        case LayerType::Variant::Clean: return "Clean";
    }
    return "Clean";
}

std::string_view to_string(LayerType::Encoding e) {
    return e == LayerType::Encoding::Base64 ? "Base64" : "Binary";
}

std::string_view to_string(LayerType::Compression c) {
    return c == LayerType::Compression::Deflate ? "Deflate" : "Gzip";
}

std::string describe(const LayerType& layer) {
    std::string out(to_string(layer.variant));
    if (layer.encoding) {
        out += "/";
        out += to_string(*layer.encoding);
    }
    if (layer.compression) {
        out += "/";
        out += to_string(*layer.compression);
    }
    return out;
}

std::string_view to_string(TechniqueTag tag) {
    switch (tag) {
        case TechniqueTag::Concatenation: return "Concatenation";
        case TechniqueTag::Reordering: return "Reordering";
        case TechniqueTag::Tick: return "Tick";
        case TechniqueTag::Eval: return "Eval";
        case TechniqueTag::UpLowCase: return "UpLowCase";
        case TechniqueTag::WhiteSpaces: return "WhiteSpaces";
        case TechniqueTag::Base64Encoding: return "Base64Encoding";
        case TechniqueTag::BinaryEncoding: return "BinaryEncoding";
        case TechniqueTag::DeflateCompression: return "DeflateCompression";
        case TechniqueTag::GzipCompression: return "GzipCompression";
    }
    return "Concatenation";
}

std::optional<TechniqueTag> technique_from_string(std::string_view name) {
    static const std::pair<std::string_view, TechniqueTag> kAliases[] = {
        {"concat", TechniqueTag::Concatenation},     {"reorder", TechniqueTag::Reordering},
        {"tick", TechniqueTag::Tick},                {"eval", TechniqueTag::Eval},
        {"case", TechniqueTag::UpLowCase},           {"ws", TechniqueTag::WhiteSpaces},
        {"whitespace", TechniqueTag::WhiteSpaces},   {"base64", TechniqueTag::Base64Encoding},
        {"binary", TechniqueTag::BinaryEncoding},    {"deflate", TechniqueTag::DeflateCompression},
        {"gzip", TechniqueTag::GzipCompression},
    };
    for (auto tag : kAllTechniques) {
        if (iequals(to_string(tag), name)) {
            return tag;
        }
    }
    for (const auto& [alias, tag] : kAliases) {
        if (iequals(alias, name)) {
            return tag;
        }
    }
    return std::nullopt;
}

bool is_string_technique(TechniqueTag tag) {
    for (auto t : kStringTechniques) {
        if (t == tag) {
            return true;
        }
    }
    return false;
}

namespace {

struct CmdletTable {
    std::unordered_map<std::string, std::string_view> by_lower;

    CmdletTable() {
        std::string_view rest = detail::kCmdletTableText;
        while (!rest.empty()) {
            auto nl = rest.find('\n');
            std::string_view line = rest.substr(0, nl);
            rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
                line.remove_suffix(1);
            }
            if (line.empty() || line.front() == '#') {
                continue;
            }
            by_lower.emplace(to_lower(line), line);
        }
    }
};

const CmdletTable& cmdlet_table() {
    static const CmdletTable table;
    return table;
}

}  // namespace

std::optional<std::string_view> canonical_cmdlet(std::string_view name) {
    const auto& t = cmdlet_table();
    auto it = t.by_lower.find(to_lower(name));
    if (it == t.by_lower.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t canonical_cmdlet_count() { return cmdlet_table().by_lower.size(); }

std::vector<std::string_view> all_cmdlets() {
    std::vector<std::pair<std::string, std::string_view>> sorted(cmdlet_table().by_lower.begin(),
                                                                 cmdlet_table().by_lower.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::string_view> out;
    out.reserve(sorted.size());
    for (const auto& entry : sorted) {
        out.push_back(entry.second);
    }
    return out;
}

bool token_equivalent(std::string_view a, std::string_view b) {
    std::vector<Token> ta;
    std::vector<Token> tb;
    try {
        ta = tokenize(a);
        tb = tokenize(b);
    } catch (const TokenizeError&) {
        return a == b;
    }
    auto significant = [](std::vector<Token>& toks) {
        std::vector<Token> out;
        for (auto& t : toks) {
            if (t.kind != TokenKind::Whitespace) {
                out.push_back(std::move(t));
            }
        }
        while (!out.empty() && out.back().kind == TokenKind::Newline) out.pop_back();
        std::size_t lead = 0;
        while (lead < out.size() && out[lead].kind == TokenKind::Newline) ++lead;
        out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(lead));
        return out;
    };
    const auto sa = significant(ta);
    const auto sb = significant(tb);
    if (sa.size() != sb.size()) {
        return false;
    }
    for (std::size_t i = 0; i < sa.size(); ++i) {
        if (sa[i].kind != sb[i].kind) {
            return false;
        }
        const bool same = sa[i].is_string() ? sa[i].text == sb[i].text : iequals(sa[i].text, sb[i].text);
        if (!same) {
            return false;
        }
    }
    return true;
}

}  // namespace psdeob
