#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace neuronet {

// Exit codes: 0 success, 1 validation error (bad flags, bad config), 2
// runtime error (I/O, malformed data, numerical failure).
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// args excludes the program name: {"synth", "--spec", "default", ...}.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace neuronet
