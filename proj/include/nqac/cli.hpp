#pragma once
// Command-line front end. Exit codes: 0 success, 1 usage, 2 data or artifact error.
#include <iosfwd>
#include <string>
#include <vector>

namespace nqac::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nqac::cli
