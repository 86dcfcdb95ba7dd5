#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace udss::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;
inline constexpr int kExitRuntime = 125;

// argv[0] is the program name. `run` replaces the calling process with the
// contained command on success and only returns on failure.
int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace udss::cli
