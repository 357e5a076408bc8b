#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fluidmc::cli {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 when the input is rejected with diagnostics and 2 on numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fluidmc::cli
