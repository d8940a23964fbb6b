/// @file sandbox.hpp
/// @brief Emulated execution of a cleaned script. Nothing is executed for
/// real: a small interpreter evaluates the expression forms droppers rely
/// on and records what the script would have done.

#pragma once

#include "psdeob/detector.hpp"
#include "psdeob/psmodel.hpp"

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace psdeob {

enum class ActionKind { Download, ProcStart, ShellExec, VarManip, ProcKill, MemLoad };

inline constexpr ActionKind kAllActionKinds[] = {ActionKind::Download, ActionKind::ProcStart, ActionKind::ShellExec,
                                                 ActionKind::VarManip, ActionKind::ProcKill,  ActionKind::MemLoad};

std::string_view to_string(ActionKind kind);

struct ActionRecord {
    ActionKind kind = ActionKind::Download;
    /// URL, process path, variable name, "registry", ...
    std::string detail;
    /// Statement in the emulated script that produced the action.
    Span span;
    int stage_index = 0;
    /// False when part of the detail came from a value the emulator could
    /// not compute. An unknown variable keeps its name as written; parts
    /// with no textual form are shown as `<?>`.
    bool resolved = true;
};

struct InterceptedEval {
    std::string argument_text;
    bool resolved = false;
    Span span;
    /// Layer of the argument when it is itself obfuscated (resolved only).
    /// Such arguments are not interpreted inline; the pipeline peels them
    /// as a further stage.
    std::optional<LayerType> nested_layer;
};

enum class EnvUsage { PathBuild, ProcessArg, Other };

std::string_view to_string(EnvUsage usage);

struct EnvVarUse {
    std::string name;  ///< as written, e.g. "APPDATA"
    EnvUsage usage = EnvUsage::Other;
    Span span;
};

/// Result of a fetch by a client.
enum class FetchErrorKind { FetchTimeout, FetchTooLarge, ClientError };

std::string_view to_string(FetchErrorKind kind);

struct FetchResult {
    bool ok = false;
    std::string bytes;
    FetchErrorKind error = FetchErrorKind::ClientError;
    std::string message;

    static FetchResult success(std::string b) { return {true, std::move(b), FetchErrorKind::ClientError, {}}; }
    static FetchResult failure(FetchErrorKind k, std::string msg) { return {false, {}, k, std::move(msg)}; }
};

/// Network access used only under FetchViaClient. Implementations must be
/// safe to call from several analyses at once.
class FetchClient {
public:
    virtual ~FetchClient() = default;
    virtual FetchResult fetch(const std::string& url, double timeout_seconds, std::size_t max_bytes) = 0;
};

struct FetchPolicy {
    enum class Mode { RecordOnly, FetchViaClient };
    Mode mode = Mode::RecordOnly;
    std::shared_ptr<FetchClient> client;
    double timeout_seconds = 30.0;
    std::size_t max_bytes = 32u << 20;
};

struct FetchOutcome {
    enum class Status { Stored, Skipped, Failed };
    Status status = Status::Skipped;
    std::string url;
    std::string artifact_id;  ///< sha256 of the stored bytes
    std::filesystem::path path;
    std::optional<FetchErrorKind> error;
    std::string message;
};

std::string_view to_string(FetchOutcome::Status status);

/// Fetch one downloaded URL according to @p policy. RecordOnly never
/// touches the client. Stored bytes go to
/// `<artifacts_root>/<input_sha256>/<payload_sha256>.bin` when a root is
/// given. Errors are returned, never thrown.
FetchOutcome fetch_artifact(const std::string& url, const FetchPolicy& policy,
                            const std::filesystem::path& artifacts_root, const std::string& input_sha256);

/// Write @p bytes under the artifacts layout and return the payload digest.
/// With an empty root nothing is written.
std::string store_artifact(const std::filesystem::path& artifacts_root, const std::string& input_sha256,
                           std::string_view bytes);

struct EmulationResult {
    std::vector<ActionRecord> actions;
    std::vector<InterceptedEval> evals;
    std::vector<EnvVarUse> env_uses;
    /// Destination paths of downloads and file writes.
    std::vector<std::string> dropped_paths;
    std::vector<std::string> warnings;
    std::size_t steps = 0;
};

inline constexpr std::size_t kEmulationStepBudget = 10000;

class EmulationBudgetExceeded : public std::runtime_error {
public:
    EmulationBudgetExceeded(std::size_t budget, EmulationResult partial)
        : std::runtime_error("emulation exceeded " + std::to_string(budget) + " steps"),
          partial_(std::move(partial)) {}
    const EmulationResult& partial() const { return partial_; }

private:
    EmulationResult partial_;
};

/// Interpret @p script. The policy is carried for callers that fetch the
/// recorded downloads; emulation itself never performs I/O.
/// Throws EmulationBudgetExceeded.
EmulationResult emulate(const ScriptText& script, const FetchPolicy& policy, int stage_index = 0,
                        std::size_t step_budget = kEmulationStepBudget);

}  // namespace psdeob
