#include "doctest.h"

#include "psdeob/detector.hpp"
#include "psdeob/obfuscator.hpp"
#include "psdeob/stringdeobf.hpp"

using namespace psdeob;

namespace {
std::string run(ScriptText (*f)(const ScriptText&), const std::string& s) { return f(ScriptText::from_text(s)).content; }
}  // namespace

TEST_CASE("concatenation folding") {
    CHECK(run(deobf_concat, "\"http://\" + 'example.com' + '/malware.exe'") == "'http://example.com/malware.exe'");
    CHECK(run(deobf_concat, "Start-Process ('mal' + 'ware.exe')") == "Start-Process 'malware.exe'");
    CHECK(run(deobf_concat, "$a = 'x'; $b = 'y'; $a + $b") == "'xy'");
    // A variable used outside a chain must stay.
    CHECK(run(deobf_concat, "$a = 'x'; Write-Host $a; $a + 'y'").find("Write-Host $a") != std::string::npos);
    CHECK(run(deobf_concat, "'a' + $b") == "'a' + $b");
    // Member access keeps the parentheses.
    CHECK(run(deobf_concat, "('a'+'b').Length") == "('ab').Length");
}

TEST_CASE("format-operator reordering") {
    CHECK(deobf_reorder(ScriptText::from_text("'{1}{0}{2}' -f 'example.com','http://','/malware.exe'")).content ==
          "'http://example.com/malware.exe'");
    CHECK(deobf_reorder(ScriptText::from_text("&('{1}{0}' -f '-Object', 'New')")).content == "&('New-Object')");
    std::vector<std::string> warnings;
    const std::string bad = "'{3}{0}' -f 'a','b'";
    CHECK(deobf_reorder(ScriptText::from_text(bad), &warnings).content == bad);
    CHECK(warnings.size() == 1);
}

TEST_CASE("tick removal keeps real escapes") {
    CHECK(run(deobf_tick, "S`tart-P``roce`ss 'x'") == "Start-Process 'x'");
    CHECK(run(deobf_tick, "\"a`tb`x\"") == "\"a`tbx\"");
    CHECK(run(deobf_tick, "Write-Host 'a`b'") == "Write-Host 'a`b'");
}

TEST_CASE("eval unwrapping and case/whitespace normalisation") {
    CHECK(run(deobf_eval, "&('New-Object') Net.WebClient") == "New-Object Net.WebClient");
    CHECK(run(deobf_eval, ".(\"iex\") $x") == "iex $x");
    CHECK(run(normalize_case_ws, "nEW-oBjECt   Net.WebClient") == "New-Object Net.WebClient");
    CHECK(run(normalize_case_ws, "$variable    = $env:USERPROFILE    +    '\\a  b'") ==
          "$variable = $env:USERPROFILE + '\\a  b'");
}

TEST_CASE("driver reports techniques in enum order") {
    const StringPassResult r = deobfuscate_strings(ScriptText::from_text("&('{1}{0}' -f '-Object','New') Net.WebClient"));
    CHECK(r.output.content == "New-Object Net.WebClient");
    CHECK(r.techniques == std::vector<TechniqueTag>{TechniqueTag::Reordering, TechniqueTag::Eval});
    CHECK(r.changed);
    const StringPassResult clean = deobfuscate_strings(ScriptText::from_text("Write-Output 'a'"));
    CHECK_FALSE(clean.changed);
    CHECK(clean.techniques.empty());
}

TEST_CASE("property: each transform strictly lowers the obfuscation measure") {
    using Pass = ScriptText (*)(const ScriptText&);
    const Pass passes[] = {deobf_concat, deobf_tick, deobf_eval, normalize_case_ws,
                           [](const ScriptText& s) { return deobf_reorder(s); }};
    const auto names = template_names();
    std::size_t changes = 0;
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        std::mt19937_64 rng(seed);
        const CleanSample clean = clean_template(seed % names.size(), rng);
        ScriptText s;
        try {
            s = obfuscate_layers(clean.script, {{LayerType::string_based(), std::vector<TechniqueTag>(std::begin(kStringTechniques), std::end(kStringTechniques))}}, seed).first;
        } catch (const NotApplicable&) {
            continue;
        }
        for (auto pass : passes) {
            const ScriptText next = pass(s);
            if (next.content != s.content) {
                ++changes;
                CHECK(string_obfuscation_measure(next) < string_obfuscation_measure(s));
            }
        }
        CAPTURE(s.content);
        const StringPassResult r = deobfuscate_strings(s);
        CHECK(string_obfuscation_measure(r.output) == 0);
        CHECK(detect_layer(r.output).layer.is_clean());
        CHECK(token_equivalent(r.output.content, clean.script.content));
        // Idempotent once the fixed point is reached.
        CHECK(deobfuscate_strings(r.output).output.content == r.output.content);
    }
    CHECK(changes > 0);
}
