#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rdc::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

/// Entry point behind the `rdc-annotate` binary. Subcommands: ingest, index,
/// annotate, evaluate, sweep-rounds, compare.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rdc::cli
