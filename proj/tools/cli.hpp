#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xraycast::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitComputation = 3;

/// Runs the command line `args` (args[0] is the program name). The
/// effective-config JSON goes to `out`, warnings and errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace xraycast::cli
