#pragma once

#include <string>
#include <vector>

namespace rlsched {

// Exit codes shared by every subcommand.
enum CliExit {
  kExitOk = 0,
  kExitInputError = 1,   // unreadable or invalid input document
  kExitInfeasible = 2,   // no feasible plan for the given resources
  kExitMismatch = 3,     // plan does not match the given cluster/workload
  kExitUsage = 64,
};

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args without argv[0]

}  // namespace rlsched
