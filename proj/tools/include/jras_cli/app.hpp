#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace jras::cli {

// Exit codes: 0 success, 1 invalid input or config, 2 runtime failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace jras::cli
