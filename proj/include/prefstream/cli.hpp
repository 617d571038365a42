#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prefstream {

inline constexpr int kExitOk = 0;
inline constexpr int kExitStageError = 1;
inline constexpr int kExitUsage = 2;

/// Parses `args` (program name first), runs the subcommand and returns the exit
/// status. Results go to `out`, usage text and errors to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace prefstream
