#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chronovec::cli {

enum ExitCode : int { kOk = 0, kUserError = 1, kInternalError = 2 };

// Parses args (without the program name) and dispatches one subcommand.
// Data goes to `out`, diagnostics and usage to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chronovec::cli
