#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rkp::cli {

enum ExitCode { kOk = 0, kUsage = 2, kInputError = 2, kContractError = 3 };

/// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rkp::cli
