/// @file pipeline.hpp
/// @brief The analysis driver: peel layers until the script is clean,
/// emulate it, and assemble a report. Also corpus-level aggregation.

#pragma once

#include "psdeob/behavior.hpp"
#include "psdeob/detector.hpp"
#include "psdeob/preprocess.hpp"
#include "psdeob/psmodel.hpp"
#include "psdeob/sandbox.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace psdeob {

/// One peeled layer.
struct StageTrace {
    int stage_index = 1;
    LayerType layer;
    std::vector<TechniqueTag> techniques;
    std::string input_excerpt;  ///< first 200 characters of the stage input
    ScriptText output_script;
    std::vector<AntiDebugRemoval> anti_debug;
    std::vector<std::string> warnings;
};

enum class AnalysisStatus { Complete, Aborted };

std::string_view to_string(AnalysisStatus s);

struct AnalysisReport {
    std::string source_id;
    std::string sha256;
    std::vector<StageTrace> stages;
    std::vector<AntiDebug> anti_debug_removed;
    std::vector<ActionRecord> actions;
    std::optional<BehavioralPattern> pattern;
    std::vector<EnvVarStat> env_vars;
    std::vector<Ioc> iocs;
    ScriptText final_script;
    AnalysisStatus status = AnalysisStatus::Complete;
    std::optional<std::string> abort_reason;

    std::vector<InterceptedEval> evals;
    std::vector<std::string> dropped_paths;
    std::vector<FetchOutcome> fetches;
    /// Decoder and emulation problems that did not stop the analysis.
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
};

inline constexpr int kDefaultMaxLayers = 16;

struct AnalyzeOptions {
    int max_layers = kDefaultMaxLayers;
    /// Where fetched payloads and undecodable blobs are stored; empty
    /// keeps nothing on disk.
    std::filesystem::path artifacts_root;
    std::size_t step_budget = kEmulationStepBudget;
};

/// Run the full analysis. Never throws for problems in the input; those
/// end in an Aborted report or in `errors`. Throws std::invalid_argument
/// when max_layers < 1.
AnalysisReport analyze(const ScriptText& script, const FetchPolicy& policy, const AnalyzeOptions& options = {});
AnalysisReport analyze(const ScriptText& script, const FetchPolicy& policy, int max_layers);

/// Leading token of an abort reason, e.g. "SyntaxError".
std::string abort_kind(const AnalysisReport& report);

struct CorpusStats {
    std::size_t total = 0;
    std::size_t complete = 0;
    std::size_t aborted = 0;
    std::map<std::size_t, std::size_t> stage_counts;   ///< stages per script -> scripts
    std::map<std::string, std::size_t> layer_types;    ///< variant of every stage
    std::map<std::string, std::size_t> layer_details;  ///< e.g. "Encoded/Base64"
    std::map<std::string, std::size_t> anti_debug;
    std::map<std::string, std::size_t> patterns;
    std::map<std::string, std::size_t> env_vars;  ///< name -> occurrences
    std::map<std::string, std::size_t> env_usage;  ///< usage kind -> occurrences
    std::map<std::string, std::size_t> actions;    ///< scripts showing each action kind
    std::map<std::string, std::size_t> abort_reasons;

    bool operator==(const CorpusStats&) const = default;
};

/// Fold one report into @p stats.
void accumulate(CorpusStats& stats, const AnalysisReport& report);

/// Analyze every input on @p parallelism worker threads. Results are
/// folded in input order, so the stats do not depend on scheduling.
/// Throws std::invalid_argument when parallelism < 1.
CorpusStats analyze_corpus(const std::vector<ScriptText>& inputs, const FetchPolicy& policy, unsigned parallelism,
                           const AnalyzeOptions& options = {});

/// Same, also returning every report (in input order).
CorpusStats analyze_corpus(const std::vector<ScriptText>& inputs, const FetchPolicy& policy, unsigned parallelism,
                           const AnalyzeOptions& options, std::vector<AnalysisReport>* reports);

// ---- serialization ------------------------------------------------------

/// Pretty-printed JSON with stable key order. No timestamps.
std::string report_to_json(const AnalysisReport& report, bool raw_iocs = false);

/// Run metadata written next to a report (`<report>.meta.json`).
std::string report_meta_json(const AnalysisReport& report, double elapsed_seconds, const std::string& tool_version);

std::string stats_to_json(const CorpusStats& stats);

/// `layers,count`
std::string stage_count_csv(const CorpusStats& stats);
/// `layer_type,count`
std::string layer_type_csv(const CorpusStats& stats);
/// `anti_debug,count`
std::string anti_debug_csv(const CorpusStats& stats);

}  // namespace psdeob
