#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace climdiff::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Runs one command line (without the program name). Normal output goes to
/// `out`; failures print a single "error[<kind>]: <message>" line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace climdiff::cli
