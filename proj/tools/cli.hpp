#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cdavsr::cli {

/// Runs one command line (args[0] is the program name). Returns 0 on success,
/// 1 on a contract violation, 2 on an I/O or parse error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cdavsr::cli
