#pragma once

#include <string>
#include <vector>

namespace sti::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kInput = 3,
  kNumerical = 4,
};

// Runs one `sti` invocation; args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace sti::cli
