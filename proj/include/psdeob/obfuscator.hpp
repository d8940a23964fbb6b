/// @file obfuscator.hpp
/// @brief Ground-truth generator: applies the catalogued obfuscation
/// techniques (and stacks of them) to clean scripts, so that detection
/// and de-obfuscation can be checked against known labels.

#pragma once

#include "psdeob/psmodel.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace psdeob {

/// The technique has nothing to act on in this script (no literal to
/// split, no cmdlet name to re-case, payload too short to encode...).
class NotApplicable : public std::runtime_error {
public:
    NotApplicable(TechniqueTag technique, const std::string& why)
        : std::runtime_error(std::string(to_string(technique)) + ": " + why), technique_(technique) {}
    TechniqueTag technique() const { return technique_; }

private:
    TechniqueTag technique_;
};

struct ObfuscateOptions {
    /// When false, split points, wrapper forms and padding are fixed, so a
    /// Base64 layer over `Start-Process "malware.exe"` yields exactly the
    /// bare blob `U3RhcnQtUHJvY2VzcyAibWFsd2FyZS5leGUi`.
    bool randomize = true;
};

/// Apply one technique. Deterministic for a given (script, technique,
/// seed, options). The result passes syntax_check and is never Clean.
/// Throws NotApplicable.
ScriptText obfuscate(const ScriptText& script, TechniqueTag technique, std::uint64_t seed,
                     const ObfuscateOptions& options = {});

/// One envelope of a stack: a String layer lists its techniques in the
/// order they are applied; Encoded/Compressed layers carry none.
struct LayerSpec {
    LayerType layer;
    std::vector<TechniqueTag> techniques;

    bool operator==(const LayerSpec&) const = default;
};

/// Ground truth for a generated sample, innermost layer first.
struct StackLabel {
    std::vector<LayerSpec> layers;

    LayerType outer() const { return layers.empty() ? LayerType::clean() : layers.back().layer; }
    bool operator==(const StackLabel&) const = default;
};

/// Apply @p layers in order (innermost first). Throws
/// std::invalid_argument for an empty stack and NotApplicable when a
/// layer cannot be applied.
std::pair<ScriptText, StackLabel> obfuscate_layers(const ScriptText& script, const std::vector<LayerSpec>& layers,
                                                   std::uint64_t seed, const ObfuscateOptions& options = {});

/// Parse a stack such as `string:reorder+tick+concat>binary>deflate`.
/// Layers are separated by `>`, innermost first. String techniques are
/// concat, reorder, tick, eval, case, ws (or their full tag names);
/// encoding and compression layers are base64, binary, deflate, gzip.
/// Throws std::invalid_argument.
std::vector<LayerSpec> parse_layer_spec(std::string_view spec);
std::string format_layer_spec(const std::vector<LayerSpec>& layers);

// ---- corpus generation --------------------------------------------------

/// A clean script drawn from the built-in template set.
struct CleanSample {
    std::string template_name;
    ScriptText script;
};

std::vector<std::string_view> template_names();
/// Instantiate template @p index (mod the template count) with names and
/// URLs drawn from @p rng.
CleanSample clean_template(std::size_t index, std::mt19937_64& rng);

/// A random stack of 1 to 3 layers: optionally one String layer
/// (innermost), then Encoded/Compressed envelopes.
std::vector<LayerSpec> random_stack(std::mt19937_64& rng);

struct GeneratedSample {
    std::string file_name;
    std::string template_name;
    std::uint64_t seed = 0;
    ScriptText original;
    ScriptText script;
    StackLabel label;
};

struct GeneratedCorpus {
    std::vector<GeneratedSample> samples;
    /// One line per attempt that hit NotApplicable and was redrawn.
    std::vector<std::string> skipped;
};

/// Generate @p count samples. With @p spec every sample uses that stack,
/// otherwise stacks are drawn by random_stack.
GeneratedCorpus generate_corpus(std::size_t count, std::uint64_t seed,
                                const std::optional<std::vector<LayerSpec>>& spec = std::nullopt);

/// `labels.json`: file name -> {template, seed, spec, layers[]}.
std::string labels_json(const GeneratedCorpus& corpus);

/// Write every sample as `<dir>/<file_name>` plus `<dir>/labels.json`.
void write_corpus(const std::filesystem::path& dir, const GeneratedCorpus& corpus);

}  // namespace psdeob
