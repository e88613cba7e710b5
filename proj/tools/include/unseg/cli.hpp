#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace unseg::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // verification or metric failure, failed runs
  kExitUsage = 2,
  kExitIo = 3,
};

// Environment variable that switches models to 64-bit floats when set to a
// non-empty value other than "0".
inline constexpr const char* kFp64EnvVar = "UNSEG_FP64";

// args excludes the program name. Never throws.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unseg::cli
