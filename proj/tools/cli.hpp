#pragma once

#include <string>
#include <vector>

namespace ucsbi::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kConfig = 3, kBackend = 4, kNumeric = 5 };

/// Runs one subcommand. Never throws: failures print a one-line JSON error
/// to stderr and return the matching exit code.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace ucsbi::cli
