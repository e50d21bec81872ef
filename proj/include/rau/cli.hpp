#pragma once

#include <iosfwd>

namespace rau {

/// Exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumeric = 2, kExitIo = 3 };

/// Runs `rau <command> [flags]`, writing normal output to `out` and
/// diagnostics to `err`. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rau
