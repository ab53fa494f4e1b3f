#pragma once

#include <iosfwd>

namespace hjflow::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 1,
  kScientificNegative = 3,
  kSingularity = 4,
  kResolution = 5,
};

/// Runs one hjflow invocation; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hjflow::cli
