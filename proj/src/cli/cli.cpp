#include "psdeob/cli.hpp"

#include "psdeob/obfuscator.hpp"
#include "psdeob/pipeline.hpp"
#include "psdeob/text.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

namespace psdeob {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kStageEcho = 1000;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw UsageError("cannot read " + p.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& body) {
    if (p.has_parent_path()) {
        fs::create_directories(p.parent_path());
    }
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw UsageError("cannot write " + p.string());
    }
    out << body;
}

fs::path meta_path(const fs::path& report) {
    fs::path m = report;
    if (m.extension() == ".json") {
        m.replace_extension();
    }
    return m.string() + ".meta.json";
}

std::string indent(std::string_view body, std::string_view pad) {
    std::string out(pad);
    for (char c : body) {
        out.push_back(c);
        if (c == '\n') out += pad;
    }
    return out;
}

std::string technique_list(const std::vector<TechniqueTag>& ts) {
    std::string out;
    for (auto t : ts) {
        if (!out.empty()) out += ", ";
        out += to_string(t);
    }
    return out;
}

void print_report(const AnalysisReport& r, bool raw_iocs, std::ostream& out) {
    out << "Input: " << r.source_id << " (sha256 " << r.sha256 << ")\n";
    if (r.stages.empty()) {
        out << "No obfuscation layers found.\n";
    }
    for (const auto& s : r.stages) {
        out << "Stage " << s.stage_index << ": " << describe(s.layer);
        if (!s.techniques.empty()) out << " [" << technique_list(s.techniques) << "]";
        out << "\n" << indent(text::excerpt(s.output_script.content, kStageEcho), "    ") << "\n";
        for (const auto& a : s.anti_debug) {
            out << "    anti-debug removed: " << to_string(a.kind) << "\n";
        }
        for (const auto& w : s.warnings) out << "    warning: " << w << "\n";
    }
    if (!r.anti_debug_removed.empty()) {
        out << "Anti-debug removed:";
        for (auto k : r.anti_debug_removed) out << " " << to_string(k);
        out << "\n";
    }
    if (!r.actions.empty()) {
        out << "Actions:\n";
        for (const auto& a : r.actions) {
            const std::string detail =
                a.kind == ActionKind::Download && !raw_iocs ? defang(a.detail, IocKind::Url) : a.detail;
            out << "  " << to_string(a.kind) << ": " << detail << (a.resolved ? "" : " (unresolved)") << "\n";
        }
    }
    if (r.pattern) {
        out << "Pattern: " << to_string(*r.pattern) << "\n";
    }
    if (!r.env_vars.empty()) {
        out << "Environment variables:\n";
        for (const auto& e : r.env_vars) {
            out << "  " << e.name << " (" << to_string(e.usage) << ") x" << e.count << "\n";
        }
    }
    if (!r.iocs.empty()) {
        out << "IOCs:\n";
        for (const auto& i : r.iocs) {
            out << "  " << to_string(i.kind) << ": " << (raw_iocs ? i.raw : i.defanged) << "\n";
        }
    }
    for (const auto& f : r.fetches) {
        out << "Fetch " << (raw_iocs ? f.url : defang(f.url, IocKind::Url)) << ": " << to_string(f.status);
        if (!f.artifact_id.empty()) out << " " << f.artifact_id;
        if (f.error) out << " (" << to_string(*f.error) << ": " << f.message << ")";
        out << "\n";
    }
    for (const auto& e : r.errors) out << "Error: " << e << "\n";
    out << "Status: " << to_string(r.status);
    if (r.abort_reason) out << " (" << *r.abort_reason << ")";
    out << "\n";
}

struct AnalyzeArgs {
    std::string input;
    std::string json;
    std::string artifacts;
    int max_layers = kDefaultMaxLayers;
    bool fetch = false;
    double timeout = 30.0;
    bool raw_iocs = false;
};

int do_analyze(const AnalyzeArgs& a, std::istream& in, std::ostream& out, std::ostream& err) {
    ScriptText script;
    if (a.input == "-") {
        const std::string raw{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
        script = ingest_bytes(raw, "stdin");
    } else {
        script = ingest_bytes(read_file(a.input), a.input);
    }
    FetchPolicy policy;
    policy.timeout_seconds = a.timeout;
    if (a.fetch) {
        err << "WARNING: --fetch downloads live payloads from the URLs found in this sample.\n"
               "WARNING: only run it inside an isolated analysis network.\n";
        policy.mode = FetchPolicy::Mode::FetchViaClient;
        policy.client = make_http_client();
    }
    AnalyzeOptions opts;
    opts.max_layers = a.max_layers;
    opts.artifacts_root = a.artifacts;

    const auto t0 = std::chrono::steady_clock::now();
    const AnalysisReport report = analyze(script, policy, opts);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    print_report(report, a.raw_iocs, out);
    if (!a.json.empty()) {
        const std::string body = report_to_json(report, a.raw_iocs);
        if (a.json == "-") {
            out << body;
        } else {
            write_file(a.json, body);
            write_file(meta_path(a.json), report_meta_json(report, elapsed, std::string(kToolVersion)));
        }
    }
    return report.status == AnalysisStatus::Complete ? exit_code::kComplete : exit_code::kAborted;
}

struct CorpusArgs {
    std::string dir;
    unsigned jobs = 0;
    std::string stats;
    std::string csv;
    int max_layers = kDefaultMaxLayers;
};

void print_histogram(std::ostream& out, std::string_view title, const auto& m) {
    out << title << ":\n";
    for (const auto& [k, v] : m) out << "  " << k << ": " << v << "\n";
}

int do_corpus(const CorpusArgs& a, std::ostream& out) {
    if (!fs::is_directory(a.dir)) {
        throw UsageError(a.dir + " is not a directory");
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.dir)) {
        if (e.is_regular_file() && to_lower(e.path().extension().string()) == ".ps1") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ScriptText> inputs;
    inputs.reserve(files.size());
    for (const auto& f : files) inputs.push_back(ingest_bytes(read_file(f), f.filename().string()));

    const unsigned jobs = a.jobs > 0 ? a.jobs : std::max(1u, std::thread::hardware_concurrency());
    AnalyzeOptions opts;
    opts.max_layers = a.max_layers;
    const CorpusStats stats = analyze_corpus(inputs, FetchPolicy{}, jobs, opts);

    out << "Scripts: " << stats.total << " (complete " << stats.complete << ", aborted " << stats.aborted << ")\n";
    print_histogram(out, "Layers per script", stats.stage_counts);
    print_histogram(out, "Layer types", stats.layer_types);
    print_histogram(out, "Anti-debug removals", stats.anti_debug);
    print_histogram(out, "Patterns", stats.patterns);
    if (!stats.abort_reasons.empty()) print_histogram(out, "Abort reasons", stats.abort_reasons);

    if (!a.stats.empty()) {
        write_file(a.stats, stats_to_json(stats));
    }
    if (!a.csv.empty()) {
        const fs::path dir(a.csv);
        write_file(dir / "layers.csv", stage_count_csv(stats));
        write_file(dir / "layer_types.csv", layer_type_csv(stats));
        write_file(dir / "anti_debug.csv", anti_debug_csv(stats));
    }
    return exit_code::kComplete;
}

struct GenArgs {
    std::string dir;
    std::size_t count = 0;
    std::uint64_t seed = 0;
    std::string layer_spec;
};

int do_gen(const GenArgs& a, std::ostream& out) {
    std::optional<std::vector<LayerSpec>> spec;
    if (!a.layer_spec.empty()) {
        try {
            spec = parse_layer_spec(a.layer_spec);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    const GeneratedCorpus corpus = generate_corpus(a.count, a.seed, spec);
    write_corpus(a.dir, corpus);
    std::string log;
    for (const auto& s : corpus.skipped) log += s + "\n";
    write_file(fs::path(a.dir) / "generation.log", log);
    out << "Wrote " << corpus.samples.size() << " samples to " << a.dir << " (" << corpus.skipped.size()
        << " draws were not applicable and were redrawn; see generation.log)\n";
    return exit_code::kComplete;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layered PowerShell de-obfuscation and behavioral triage", "psdeob"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    AnalyzeArgs aa;
    auto* analyze_cmd = app.add_subcommand("analyze", "Peel, emulate and report on one script");
    analyze_cmd->add_option("input", aa.input, "Script file, or - for standard input")->required();
    analyze_cmd->add_option("--json", aa.json, "Write the JSON report here (- for standard output)");
    analyze_cmd->add_option("--artifacts", aa.artifacts, "Directory for fetched and undecodable payloads");
    analyze_cmd->add_option("--max-layers", aa.max_layers, "Abort after this many layers")
        ->check(CLI::PositiveNumber);
    analyze_cmd->add_flag("--fetch", aa.fetch, "Download payloads of intercepted downloads (live network!)");
    analyze_cmd->add_option("--timeout", aa.timeout, "Per-fetch timeout in seconds")->check(CLI::PositiveNumber);
    analyze_cmd->add_flag("--raw-iocs", aa.raw_iocs, "Print indicators without defanging");

    CorpusArgs ca;
    auto* corpus_cmd = app.add_subcommand("corpus", "Analyze every .ps1 file in a directory");
    corpus_cmd->add_option("dir", ca.dir, "Corpus directory")->required();
    corpus_cmd->add_option("--jobs", ca.jobs, "Worker threads (default: logical CPUs)")->check(CLI::PositiveNumber);
    corpus_cmd->add_option("--stats", ca.stats, "Write corpus statistics as JSON");
    corpus_cmd->add_option("--csv", ca.csv, "Write layers/layer_types/anti_debug CSV tables to this directory");
    corpus_cmd->add_option("--max-layers", ca.max_layers, "Abort a script after this many layers")
        ->check(CLI::PositiveNumber);

    GenArgs ga;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a labeled obfuscated corpus");
    gen_cmd->add_option("out", ga.dir, "Output directory")->required();
    gen_cmd->add_option("--count", ga.count, "Number of samples")->required();
    gen_cmd->add_option("--seed", ga.seed, "Generator seed")->required();
    gen_cmd->add_option("--layer-spec", ga.layer_spec, "Fixed stack, e.g. string:reorder+tick+concat>binary>deflate");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_code::kComplete;
    } catch (const CLI::CallForVersion& e) {
        out << kToolVersion << "\n";
        return exit_code::kComplete;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return exit_code::kUsage;
    }

    try {
        if (analyze_cmd->parsed()) return do_analyze(aa, in, out, err);
        if (corpus_cmd->parsed()) return do_corpus(ca, out);
        return do_gen(ga, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::kAborted;
    }
}

}  // namespace psdeob
