#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dyadgrow::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kEstimation = 3 };

// Runs one subcommand. argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace dyadgrow::cli
