#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cold::cli {

enum ExitCode : int { ok = 0, usage = 1, data_error = 2, numerical_failure = 3 };

// Runs one command line (args excludes the program name). Results go to
// `out`, progress and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cold::cli
