#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace termrec::cli {

/// Runs one command line (without the program name). Returns 0 on success,
/// 1 on an operational error and 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace termrec::cli
