// cli.hpp - the `vlab` command line, callable in-process.
#pragma once

#include <ostream>

namespace vlab::cli
{

enum ExitCode : int {
  exit_ok = 0,
  exit_usage = 1,
  exit_runtime = 2,
  /// Experiment ended deadline-missed or budget-exhausted.
  exit_constraint = 3,
};

/// Machine output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char * const * argv, std::ostream & out, std::ostream & err);

}  // namespace vlab::cli
