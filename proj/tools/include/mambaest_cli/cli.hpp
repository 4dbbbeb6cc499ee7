#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mambaest::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 2,  // also bad flags and unknown subcommands
    kRuntimeFailure = 3,
    kCheckFailure = 4,
};

/// Full command-line driver. args[0] is the program name.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace mambaest::cli
