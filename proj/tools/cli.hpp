#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace irvuln::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

/// Runs one subcommand. argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace irvuln::cli
