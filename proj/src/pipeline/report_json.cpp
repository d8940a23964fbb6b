#include "psdeob/pipeline.hpp"

#include "json.hpp"

#include <chrono>
#include <sstream>

namespace psdeob {

using ojson = nlohmann::ordered_json;

namespace {

ojson span_json(const Span& s) { return ojson::array({s.start, s.end}); }

ojson layer_json(const LayerType& l) {
    ojson j;
    j["variant"] = to_string(l.variant);
    if (l.encoding) j["encoding"] = to_string(*l.encoding);
    if (l.compression) j["compression"] = to_string(*l.compression);
    return j;
}

template <typename Map>
ojson map_json(const Map& m) {
    ojson j = ojson::object();
    for (const auto& [k, v] : m) {
        if constexpr (std::is_same_v<typename Map::key_type, std::string>) {
            j[k] = v;
        } else {
            j[std::to_string(k)] = v;
        }
    }
    return j;
}

}  // namespace

std::string report_to_json(const AnalysisReport& r, bool raw_iocs) {
    ojson j;
    j["source_id"] = r.source_id;
    j["sha256"] = r.sha256;
    j["status"] = to_string(r.status);
    j["abort_reason"] = r.abort_reason ? ojson(*r.abort_reason) : ojson(nullptr);
    ojson stages = ojson::array();
    for (const auto& s : r.stages) {
        ojson st;
        st["stage_index"] = s.stage_index;
        st["layer"] = layer_json(s.layer);
        ojson techs = ojson::array();
        for (auto t : s.techniques) techs.push_back(to_string(t));
        st["techniques"] = techs;
        st["input_excerpt"] = s.input_excerpt;
        st["output_script"] = s.output_script.content;
        ojson ad = ojson::array();
        for (const auto& a : s.anti_debug) {
            ad.push_back({{"kind", to_string(a.kind)}, {"span", span_json(a.span)}, {"replacement", a.replacement}});
        }
        st["anti_debug"] = ad;
        st["warnings"] = s.warnings;
        stages.push_back(std::move(st));
    }
    j["stages"] = stages;
    ojson ad = ojson::array();
    for (auto k : r.anti_debug_removed) ad.push_back(to_string(k));
    j["anti_debug_removed"] = ad;
    ojson actions = ojson::array();
    for (const auto& a : r.actions) {
        std::string detail = a.detail;
        if (!raw_iocs && a.kind == ActionKind::Download) {
            detail = defang(detail, IocKind::Url);
        }
        actions.push_back({{"kind", to_string(a.kind)},
                           {"detail", detail},
                           {"resolved", a.resolved},
                           {"stage_index", a.stage_index},
                           {"span", span_json(a.span)}});
    }
    j["actions"] = actions;
    j["pattern"] = r.pattern ? ojson(to_string(*r.pattern)) : ojson(nullptr);
    ojson env = ojson::array();
    for (const auto& e : r.env_vars) {
        env.push_back({{"name", e.name}, {"usage", to_string(e.usage)}, {"count", e.count}});
    }
    j["env_vars"] = env;
    ojson iocs = ojson::array();
    for (const auto& i : r.iocs) {
        ojson io{{"kind", to_string(i.kind)}, {"defanged", i.defanged}};
        if (raw_iocs) io["raw"] = i.raw;
        iocs.push_back(std::move(io));
    }
    j["iocs"] = iocs;
    ojson evals = ojson::array();
    for (const auto& e : r.evals) {
        ojson ev{{"argument_text", e.argument_text}, {"resolved", e.resolved}, {"span", span_json(e.span)}};
        ev["nested_layer"] = e.nested_layer ? ojson(describe(*e.nested_layer)) : ojson(nullptr);
        evals.push_back(std::move(ev));
    }
    j["evals"] = evals;
    ojson fetches = ojson::array();
    for (const auto& f : r.fetches) {
        ojson fj{{"url", raw_iocs ? f.url : defang(f.url, IocKind::Url)}, {"status", to_string(f.status)}};
        fj["artifact_id"] = f.artifact_id.empty() ? ojson(nullptr) : ojson(f.artifact_id);
        fj["error"] = f.error ? ojson(to_string(*f.error)) : ojson(nullptr);
        fj["message"] = f.message;
        fetches.push_back(std::move(fj));
    }
    j["fetches"] = fetches;
    j["final_script"] = r.final_script.content;
    j["errors"] = r.errors;
    j["warnings"] = r.warnings;
    return j.dump(2) + "\n";
}

std::string report_meta_json(const AnalysisReport& r, double elapsed_seconds, const std::string& tool_version) {
    ojson j;
    j["tool"] = "psdeob";
    j["version"] = tool_version;
    j["source_id"] = r.source_id;
    j["sha256"] = r.sha256;
    const auto now = std::chrono::system_clock::now();
    j["finished_unix"] = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    j["elapsed_seconds"] = elapsed_seconds;
    return j.dump(2) + "\n";
}

std::string stats_to_json(const CorpusStats& s) {
    ojson j;
    j["total"] = s.total;
    j["complete"] = s.complete;
    j["aborted"] = s.aborted;
    j["stage_counts"] = map_json(s.stage_counts);
    j["layer_types"] = map_json(s.layer_types);
    j["layer_details"] = map_json(s.layer_details);
    j["anti_debug"] = map_json(s.anti_debug);
    j["patterns"] = map_json(s.patterns);
    j["env_vars"] = map_json(s.env_vars);
    j["env_usage"] = map_json(s.env_usage);
    j["actions"] = map_json(s.actions);
    j["abort_reasons"] = map_json(s.abort_reasons);
    return j.dump(2) + "\n";
}

namespace {

template <typename Map>
std::string csv(std::string_view header, const Map& m) {
    std::ostringstream out;
    out << header << "\n";
    for (const auto& [k, v] : m) out << k << "," << v << "\n";
    return out.str();
}

}  // namespace

std::string stage_count_csv(const CorpusStats& s) { return csv("layers,count", s.stage_counts); }
std::string layer_type_csv(const CorpusStats& s) { return csv("layer_type,count", s.layer_types); }
std::string anti_debug_csv(const CorpusStats& s) { return csv("anti_debug,count", s.anti_debug); }

}  // namespace psdeob
