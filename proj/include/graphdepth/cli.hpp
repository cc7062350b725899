#pragma once

#include <string>
#include <vector>

namespace graphdepth {

// Returns the process exit code: 0 success, 1 usage or config error,
// 2 runtime failure. args excludes the program name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace graphdepth
