#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace crownstitch::cli {

// Runs one crownstitch invocation. `args` excludes the program name.
// Returns the process exit code: 0 ok, 1 bad input or usage, 2 runtime
// failure. Progress goes to `err` as one JSON object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crownstitch::cli
