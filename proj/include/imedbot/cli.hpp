#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace imedbot::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitInternalError = 2;

// Runs one invocation. `args` excludes the program name, e.g.
// {"predict", "--model", "m.imbm", "grade=3"}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace imedbot::cli
