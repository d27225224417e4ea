#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pidnet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `pidnet` tool. Results go to `out`, diagnostics and
// usage text to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pidnet
