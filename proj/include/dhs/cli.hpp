#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "dhs/error.hpp"

namespace dhs {

/// Process exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitDiverged = 2;
inline constexpr int kExitEstimation = 3;

/// Diverged -> 2; learner/estimation failures -> 3; everything else that
/// stems from the config or network -> 1.
int exit_code(ErrorKind kind);

/// Runs `dhs-rl <args...>` (program name excluded) and returns the exit code.
/// Results go to `out`; diagnostics and logging (DHS_RL_LOG) to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dhs
