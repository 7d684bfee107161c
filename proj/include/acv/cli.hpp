#pragma once

#include <string>
#include <vector>

namespace acv {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Dispatches one CLI invocation (without the program name). Returns the
// process exit code: 0 success, 1 runtime failure, 2 usage error. Data
// files already written are removed if the run fails partway.
int run_command(const std::vector<std::string>& args);

}  // namespace acv
