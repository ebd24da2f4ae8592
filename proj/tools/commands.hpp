#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace keysort::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kInvalidInput = 2 };

/// Runs the command line `args` (without the program name). Results go to files named by
/// the arguments; diagnostics go to `err`, help text to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace keysort::cli
