#include "doctest.h"

#include "psdeob/preprocess.hpp"

using namespace psdeob;

namespace {
ScriptText st(const std::string& s) { return ScriptText::from_text(s); }

std::vector<AntiDebug> kinds(const AntiDebugResult& r) {
    std::vector<AntiDebug> out;
    for (const auto& x : r.removed) out.push_back(x.kind);
    return out;
}
}  // namespace

TEST_CASE("line joining") {
    CHECK(join_multiline(st("Write-Host `\n 'a'")).content.find('\n') == std::string::npos);
    CHECK(join_multiline(st("Get-Item x |\nOut-String")).content == "Get-Item x | Out-String");
    CHECK(join_multiline(st("$a = 'x' +\n'y'")).content == "$a = 'x' + 'y'");
    CHECK(join_multiline(st("Write-Host a\nWrite-Host b")).content == "Write-Host a\nWrite-Host b");
}

TEST_CASE("cleanup strips launcher prefixes and garbage") {
    CHECK(cleanup(st("cmd /c powershell.exe -NoProfile -Command Write-Host hi")).content == "Write-Host hi");
    CHECK(cleanup(st(std::string("Write-Host\0 hi", 14))).content == "Write-Host hi");
    const std::string keep = "powershell -EncodedCommand VwByAGkAdABlAA==";
    CHECK(cleanup(st(keep)).content.find("-EncodedCommand VwByAGkAdABlAA==") != std::string::npos);
}

TEST_CASE("syntax check") {
    CHECK_FALSE(syntax_check(st("Write-Host ('a')")).has_value());
    CHECK(syntax_check(st("")).has_value());
    const auto e = syntax_check(st("Start-Process ('malware.exe'"));
    REQUIRE(e.has_value());
    CHECK(e->offset == 14);
    CHECK(syntax_check(st("Write-Host 'open")).has_value());
    CHECK(syntax_check(st("if ($x) { ]")).has_value());
}

TEST_CASE("anti-debug removal kinds") {
    CHECK(kinds(strip_antidebug(st("Start-Sleep -Seconds 60; Write-Host a"))) == std::vector{AntiDebug::Sleep});
    CHECK(kinds(strip_antidebug(st("Get-Item x | Out-Null"))) == std::vector{AntiDebug::OutNullRedirect});
    CHECK(kinds(strip_antidebug(st("Write-Host b\nwhile($true){ Write-Host a }"))) == std::vector{AntiDebug::InfiniteLoop});
    const AntiDebugResult tc = strip_antidebug(st("try { Write-Host a } catch { exit }"));
    CHECK(kinds(tc) == std::vector{AntiDebug::TryCatch});
    CHECK(tc.script.content.find("Write-Host a") != std::string::npos);
    CHECK(tc.script.content.find("catch") == std::string::npos);

    // Removing the only statement would leave an empty, invalid script.
    CHECK(strip_antidebug(st("while($true){ }")).removed.empty());

    const AntiDebugResult clean = strip_antidebug(st("Write-Host a"));
    CHECK(clean.removed.empty());
    CHECK(clean.script.content == "Write-Host a");
}

TEST_CASE("property: anti-debug output stays syntactically valid and is a fixed point") {
    const std::string pieces[] = {"Start-Sleep 5", "Write-Host a | Out-Null", "while($true){ Start-Sleep 1 }",
                                  "try { Start-Process x } catch { }", "[Threading.Thread]::Sleep(100)",
                                  "Write-Output 'b' > $null", "Get-Item y"};
    for (unsigned mask = 1; mask < (1u << std::size(pieces)); ++mask) {
        std::string script;
        for (std::size_t i = 0; i < std::size(pieces); ++i) {
            if (mask & (1u << i)) script += pieces[i] + "\n";
        }
        const AntiDebugResult r = strip_antidebug(st(script));
        CHECK_FALSE(syntax_check(r.script).has_value());
        CHECK(strip_antidebug(r.script).removed.empty());
    }
}
