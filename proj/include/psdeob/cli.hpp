/// @file cli.hpp
/// @brief Command-line front end: `analyze`, `corpus` and `gen`.

#pragma once

#include "psdeob/sandbox.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace psdeob {

inline constexpr std::string_view kToolVersion = "0.1.0";

namespace exit_code {
inline constexpr int kComplete = 0;
inline constexpr int kAborted = 2;
inline constexpr int kUsage = 3;
}  // namespace exit_code

/// Run the tool. @p args excludes the program name. Reads `-` inputs
/// from @p in. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

/// HTTP(S) client backed by cpp-httplib, for `analyze --fetch`.
std::shared_ptr<FetchClient> make_http_client();

}  // namespace psdeob
