#pragma once

#include <string>
#include <vector>

namespace ctxpose {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitGraph = 3,
  kExitDataMismatch = 4,
};

// Entry point of the `ctxpose` executable. Subcommands: generate, infer-psm,
// train, eval, compare, gradcheck.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace ctxpose
