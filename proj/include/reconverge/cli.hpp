#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace reconverge {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitInvalid = 2,
  kExitAudit = 3,
};

/// Entry point of the `reconverge` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parallel run limit: RECONVERGE_THREADS if set and positive, else the
/// hardware concurrency.
unsigned run_thread_limit();

} // namespace reconverge
