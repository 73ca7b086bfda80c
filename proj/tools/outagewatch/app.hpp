#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace outagewatch {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitAlarm = 2;

/// Runs the command line with argv-style arguments (args[0] is the program
/// name). Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses an ARL0 list entry: a decimal number or a fraction such as 1/24.
double parse_days(const std::string& text);

}  // namespace outagewatch
