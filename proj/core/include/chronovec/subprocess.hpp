#pragma once

#include <chrono>
#include <string>
#include <vector>

namespace chronovec {

struct ProcessResult {
  int exit_code = -1;      // -1 when killed by a signal or on timeout
  bool timed_out = false;
  std::string stdout_text;
};

// Runs argv[0] (PATH lookup) with stdout captured; stdin is /dev/null and
// stderr is inherited. The child is killed once the timeout elapses.
ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout);

// Whitespace split honoring single/double quotes and backslash escapes.
std::vector<std::string> split_command_line(const std::string& command);

}  // namespace chronovec
