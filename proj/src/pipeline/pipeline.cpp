#include "psdeob/pipeline.hpp"

#include "psdeob/decoder.hpp"
#include "psdeob/stringdeobf.hpp"
#include "psdeob/text.hpp"

#include <deque>
#include <stdexcept>

namespace psdeob {

std::string_view to_string(AnalysisStatus s) { return s == AnalysisStatus::Complete ? "Complete" : "Aborted"; }

std::string abort_kind(const AnalysisReport& report) {
    if (!report.abort_reason) {
        return {};
    }
    const auto colon = report.abort_reason->find(':');
    return report.abort_reason->substr(0, colon);
}

namespace {

constexpr std::size_t kExcerptChars = 200;

std::vector<TechniqueTag> layer_techniques(const LayerType& layer) {
    if (layer.encoding == LayerType::Encoding::Base64) return {TechniqueTag::Base64Encoding};
    if (layer.encoding == LayerType::Encoding::Binary) return {TechniqueTag::BinaryEncoding};
    if (layer.compression == LayerType::Compression::Deflate) return {TechniqueTag::DeflateCompression};
    if (layer.compression == LayerType::Compression::Gzip) return {TechniqueTag::GzipCompression};
    return {};
}

class Analysis {
public:
    Analysis(const ScriptText& input, const FetchPolicy& policy, const AnalyzeOptions& options)
        : policy_(policy), options_(options) {
        report_.source_id = input.source_id;
        report_.sha256 = input.sha256;
        report_.final_script = input;
    }

    AnalysisReport run(const ScriptText& input) {
        std::deque<ScriptText> work{input};
        bool primary = true;
        while (!work.empty() && report_.status == AnalysisStatus::Complete) {
            ScriptText cur = std::move(work.front());
            work.pop_front();
            std::optional<ScriptText> clean = peel_all(std::move(cur), primary);
            if (!clean) {
                if (primary) break;
                continue;
            }
            for (auto& next : emulate_stage(*clean)) {
                work.push_back(std::move(next));
            }
            primary = false;
        }
        finish();
        return std::move(report_);
    }

private:
    const FetchPolicy& policy_;
    const AnalyzeOptions& options_;
    AnalysisReport report_;
    std::vector<EnvVarUse> env_uses_;

    void abort(std::string reason) {
        report_.status = AnalysisStatus::Aborted;
        report_.abort_reason = std::move(reason);
    }

    /// Peel layers until the detector reports Clean. Returns nothing when
    /// the chain cannot continue; for the primary input that aborts the
    /// analysis, for fed-back evaluations it is recorded as an error.
    std::optional<ScriptText> peel_all(ScriptText cur, bool primary) {
        auto fail = [&](std::string reason) -> std::optional<ScriptText> {
            if (primary) {
                abort(std::move(reason));
            } else {
                report_.errors.push_back(std::move(reason));
            }
            return std::nullopt;
        };
        for (;;) {
            cur = join_multiline(cleanup(cur));
            if (auto err = syntax_check(cur)) {
                return fail("SyntaxError: " + err->detail);
            }
            LayerFinding finding;
            try {
                finding = detect_layer(cur);
            } catch (const TokenizeError& e) {
                return fail(std::string("SyntaxError: ") + e.what());
            }
            if (finding.layer.is_clean()) {
                return cur;
            }
            if (static_cast<int>(report_.stages.size()) >= options_.max_layers) {
                abort("LayerLimitExceeded: more than " + std::to_string(options_.max_layers) + " layers");
                return std::nullopt;
            }
            StageTrace stage;
            stage.stage_index = static_cast<int>(report_.stages.size()) + 1;
            stage.layer = finding.layer;
            stage.input_excerpt = text::excerpt(cur.content, kExcerptChars);
            ScriptText next;
            if (finding.layer.variant == LayerType::Variant::StringBased) {
                StringPassResult r = deobfuscate_strings(cur);
                next = std::move(r.output);
                stage.techniques = std::move(r.techniques);
                stage.warnings = std::move(r.warnings);
            } else {
                try {
                    next = peel(cur, finding);
                } catch (const DecodeError& e) {
                    const std::string reason = "DecodeError: " + std::string(to_string(e.kind())) + ": " + e.what();
                    if (e.kind() != DecodeErrorKind::UndecodableBytes) {
                        return fail(reason);
                    }
                    // A binary blob is data carried by the script, not another
                    // layer: keep it and go on with the script as it stands.
                    report_.errors.push_back(reason);
                    try {
                        const std::string id = store_artifact(options_.artifacts_root, report_.sha256, e.bytes());
                        report_.errors.push_back("undecodable payload kept as artifact " + id);
                    } catch (const std::exception& io) {
                        report_.errors.push_back(std::string("artifact not written: ") + io.what());
                    }
                    return cur;
                }
                stage.techniques = layer_techniques(finding.layer);
            }
            AntiDebugResult ad = strip_antidebug(next);
            next = std::move(ad.script);
            for (const auto& r : ad.removed) report_.anti_debug_removed.push_back(r.kind);
            stage.anti_debug = std::move(ad.removed);
            if (next.content == cur.content) {
                return fail("NoProgress: " + describe(finding.layer) + " layer could not be peeled");
            }
            stage.output_script = next;
            report_.stages.push_back(std::move(stage));
            cur = std::move(next);
        }
    }

    /// Emulate a clean script; returns fed-back evaluation arguments.
    std::vector<ScriptText> emulate_stage(const ScriptText& clean) {
        AntiDebugResult ad = strip_antidebug(clean);
        for (const auto& r : ad.removed) report_.anti_debug_removed.push_back(r.kind);
        report_.final_script = ad.script;
        EmulationResult er;
        const int stage_index = static_cast<int>(report_.stages.size());
        try {
            er = emulate(ad.script, policy_, stage_index, options_.step_budget);
        } catch (const EmulationBudgetExceeded& e) {
            er = e.partial();
            abort(std::string("EmulationBudgetExceeded: ") + e.what());
        }
        std::vector<ScriptText> feed;
        for (auto& a : er.actions) report_.actions.push_back(std::move(a));
        for (auto& u : er.env_uses) env_uses_.push_back(std::move(u));
        for (auto& p : er.dropped_paths) report_.dropped_paths.push_back(std::move(p));
        for (auto& w : er.warnings) report_.warnings.push_back(std::move(w));
        for (auto& e : er.evals) {
            if (e.resolved && e.nested_layer) {
                feed.push_back(ad.script.derive(e.argument_text));
            }
            report_.evals.push_back(std::move(e));
        }
        return feed;
    }

    void finish() {
        const bool emulated = report_.status == AnalysisStatus::Complete || abort_kind(report_) == "EmulationBudgetExceeded";
        if (emulated) {
            report_.pattern = classify_pattern(report_.actions);
        }
        report_.env_vars = extract_env_vars(env_uses_);
        report_.iocs = extract_iocs(report_.actions, report_.final_script.content, report_.dropped_paths);
        for (const auto& a : report_.actions) {
            if (a.kind != ActionKind::Download || !a.resolved) continue;
            if (std::any_of(report_.fetches.begin(), report_.fetches.end(),
                            [&](const FetchOutcome& f) { return f.url == a.detail; })) {
                continue;
            }
            report_.fetches.push_back(fetch_artifact(a.detail, policy_, options_.artifacts_root, report_.sha256));
        }
    }
};

}  // namespace

AnalysisReport analyze(const ScriptText& script, const FetchPolicy& policy, const AnalyzeOptions& options) {
    if (options.max_layers < 1) {
        throw std::invalid_argument("max_layers must be at least 1");
    }
    Analysis a(script, policy, options);
    return a.run(script);
}

AnalysisReport analyze(const ScriptText& script, const FetchPolicy& policy, int max_layers) {
    AnalyzeOptions o;
    o.max_layers = max_layers;
    return analyze(script, policy, o);
}

}  // namespace psdeob
