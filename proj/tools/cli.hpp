#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scope::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDataError = 2;
inline constexpr int kNotConverged = 3;

// Environment variable holding the default thread cap.
inline constexpr const char* kThreadsEnv = "SCOPE_THREADS";

// args excludes the program name.
// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scope::cli
