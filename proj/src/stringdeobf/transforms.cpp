#include "psdeob/stringdeobf.hpp"

#include "psdeob/detector.hpp"
#include "stringdeobf/sites.hpp"

#include <algorithm>
#include <functional>
#include <optional>

namespace psdeob {

namespace {

std::optional<sdo::View> view_of(const ScriptText& script) {
    try {
        return sdo::View(script.content);
    } catch (const TokenizeError&) {
        return std::nullopt;
    }
}

ScriptText rewrite(const ScriptText& script, const std::function<std::vector<sdo::Edit>(const sdo::View&)>& find) {
    auto v = view_of(script);
    if (!v) {
        return script;
    }
    auto edits = find(*v);
    if (edits.empty()) {
        return script;
    }
    std::string out = sdo::apply_edits(script.content, std::move(edits));
    if (out == script.content) {
        return script;
    }
    return script.derive(std::move(out));
}

}  // namespace

ScriptText deobf_concat(const ScriptText& script) { return rewrite(script, sdo::concat_sites); }

ScriptText deobf_reorder(const ScriptText& script, std::vector<std::string>* warnings) {
    return rewrite(script, [warnings](const sdo::View& v) { return sdo::reorder_sites(v, warnings); });
}

ScriptText deobf_tick(const ScriptText& script) { return rewrite(script, sdo::tick_sites); }

ScriptText deobf_eval(const ScriptText& script) { return rewrite(script, sdo::eval_sites); }

ScriptText normalize_case_ws(const ScriptText& script) {
    return rewrite(script, [](const sdo::View& v) {
        auto edits = sdo::case_sites(v);
        auto ws = sdo::ws_sites(v);
        edits.insert(edits.end(), ws.begin(), ws.end());
        return edits;
    });
}

StringPassResult deobfuscate_strings(const ScriptText& script, int max_iterations) {
    StringPassResult r;
    r.output = script;
    std::vector<bool> seen(std::size(kAllTechniques), false);
    for (int it = 0; it < max_iterations; ++it) {
        for (auto tag : detect_string_techniques(r.output)) {
            seen[static_cast<std::size_t>(tag)] = true;
        }
        ScriptText cur = r.output;
        cur = deobf_concat(cur);
        std::vector<std::string> warnings;
        cur = deobf_reorder(cur, &warnings);
        cur = deobf_tick(cur);
        cur = deobf_eval(cur);
        cur = normalize_case_ws(cur);
        ++r.iterations;
        for (auto& w : warnings) {
            if (std::find(r.warnings.begin(), r.warnings.end(), w) == r.warnings.end()) {
                r.warnings.push_back(std::move(w));
            }
        }
        if (cur.content == r.output.content) {
            break;
        }
        r.changed = true;
        r.output = std::move(cur);
        if (it + 1 == max_iterations) {
            r.warnings.push_back("string pass stopped after " + std::to_string(max_iterations) +
                                 " iterations without reaching a fixed point");
        }
    }
    for (auto tag : kAllTechniques) {
        if (seen[static_cast<std::size_t>(tag)]) {
            r.techniques.push_back(tag);
        }
    }
    return r;
}

std::size_t string_obfuscation_measure(const ScriptText& script) {
    auto v = view_of(script);
    if (!v) {
        return 0;
    }
    std::size_t m = 0;
    for (const auto& t : v->toks) {
        if (t.is_op("+") || t.is(TokenKind::FormatOperator) || t.is(TokenKind::CallOperator) ||
            t.is(TokenKind::DotSourceOperator)) {
            ++m;
        }
    }
    m += sdo::tick_sites(*v).size();
    m += sdo::case_sites(*v).size();
    m += sdo::ws_sites(*v).size();
    return m;
}

}  // namespace psdeob
