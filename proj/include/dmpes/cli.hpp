#pragma once

#include <string>
#include <vector>

namespace dmpes {

/// Runs one CLI invocation (arguments without the program name) and returns
/// the process exit code: 0 success, 1 verdict failure, 2 config error.
int run_cli(const std::vector<std::string>& args);

}  // namespace dmpes
