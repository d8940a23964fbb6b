#include "psdeob/pipeline.hpp"

#include <atomic>
#include <set>
#include <stdexcept>
#include <thread>

namespace psdeob {

void accumulate(CorpusStats& stats, const AnalysisReport& report) {
    ++stats.total;
    if (report.status == AnalysisStatus::Complete) {
        ++stats.complete;
    } else {
        ++stats.aborted;
        ++stats.abort_reasons[abort_kind(report)];
    }
    ++stats.stage_counts[report.stages.size()];
    for (const auto& s : report.stages) {
        ++stats.layer_types[std::string(to_string(s.layer.variant))];
        ++stats.layer_details[describe(s.layer)];
    }
    for (auto k : report.anti_debug_removed) {
        ++stats.anti_debug[std::string(to_string(k))];
    }
    if (report.pattern) {
        ++stats.patterns[std::string(to_string(*report.pattern))];
    }
    for (const auto& e : report.env_vars) {
        stats.env_vars[e.name] += e.count;
        stats.env_usage[std::string(to_string(e.usage))] += e.count;
    }
    std::set<ActionKind> kinds;
    for (const auto& a : report.actions) kinds.insert(a.kind);
    for (auto k : kinds) {
        ++stats.actions[std::string(to_string(k))];
    }
}

CorpusStats analyze_corpus(const std::vector<ScriptText>& inputs, const FetchPolicy& policy, unsigned parallelism,
                           const AnalyzeOptions& options, std::vector<AnalysisReport>* reports) {
    if (parallelism < 1) {
        throw std::invalid_argument("parallelism must be at least 1");
    }
    std::vector<AnalysisReport> results(inputs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < inputs.size(); i = next++) {
            try {
                results[i] = analyze(inputs[i], policy, options);
            } catch (const std::exception& e) {
                AnalysisReport r;
                r.source_id = inputs[i].source_id;
                r.sha256 = inputs[i].sha256;
                r.final_script = inputs[i];
                r.status = AnalysisStatus::Aborted;
                r.abort_reason = std::string("InternalError: ") + e.what();
                results[i] = std::move(r);
            }
        }
    };
    const unsigned n = std::min<unsigned>(parallelism, static_cast<unsigned>(std::max<std::size_t>(inputs.size(), 1)));
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    CorpusStats stats;
    for (const auto& r : results) accumulate(stats, r);
    if (reports) {
        *reports = std::move(results);
    }
    return stats;
}

CorpusStats analyze_corpus(const std::vector<ScriptText>& inputs, const FetchPolicy& policy, unsigned parallelism,
                           const AnalyzeOptions& options) {
    return analyze_corpus(inputs, policy, parallelism, options, nullptr);
}

}  // namespace psdeob
