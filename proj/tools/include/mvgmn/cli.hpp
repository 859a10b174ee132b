#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace mvgmn::cli {

enum ExitCode : int { kOk = 0, kValidationError = 1, kRuntimeError = 2 };

/// Runs one subcommand. args excludes the program name.
int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mvgmn::cli
