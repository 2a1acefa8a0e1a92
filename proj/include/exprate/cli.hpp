#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace exprate::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,      ///< I/O and anything unclassified
  kUsage = 2,        ///< unknown flag, missing argument
  kParse = 3,        ///< malformed input file
  kConsistency = 4,  ///< inconsistent records, schema mismatch
  kConvergence = 5,  ///< non-convergence or divergence
  kArgument = 6,     ///< invalid value
  kFolds = 7,        ///< cross-validation folds cannot be formed
};

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace exprate::cli
