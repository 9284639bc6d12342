#pragma once

#include <string>
#include <vector>

namespace sf {

inline constexpr const char* kVersion = "stylefield 0.1.0";

// Full command-line pipeline. Returns 0 on success, 1 on usage errors, 2 on
// runtime failures (printed to stderr with the failing module named).
int cli_run(const std::vector<std::string>& args);

}  // namespace sf
