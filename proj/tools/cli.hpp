#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace icaunet::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kConfigError = 2, kDataError = 3 };

// Parses `args` (without the program name) and runs the chosen subcommand.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace icaunet::cli
