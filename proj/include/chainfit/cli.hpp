#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chainfit {

/// Runs the `chainfit` command line. Returns the process exit code:
/// 0 success, 1 usage or configuration error, 2 runtime or data error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chainfit
