#pragma once

#include <iosfwd>

namespace forge::cli {

/// Exit codes: 0 success, 1 stage failure, 2 missing input or bad usage.
inline constexpr int kExitOk = 0;
inline constexpr int kExitStageFailure = 1;
inline constexpr int kExitMissingInput = 2;

/// Entry point of the forge tool. `out` receives human-readable results,
/// `err` receives diagnostics and, without --run-log, the JSON-lines run log.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace forge::cli
