#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lse::cli {

/// Exit statuses of run().
enum Status : int {
  kOk = 0,
  kFailure = 1,      // I/O or unexpected errors
  kUsage = 2,        // bad command line or config
  kBadInput = 3,     // dataset or checkpoint files that cannot be used
  kTrainFailed = 4,  // non-finite loss
};

/// Runs one subcommand. `args` excludes the program name, e.g.
/// {"train", "--run-dir", "out", "--lambda", "0.2"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lse::cli
