#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sparsefx::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumerical = 3 };

/// Runs one command line (args excludes the program name). Errors are
/// written to `err` as a single-line JSON record and mapped to an exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sparsefx::cli
