#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cellstorm::cli {

enum ExitCode : int {
    exit_ok = 0,
    exit_failure = 1,        // anything not covered below
    exit_usage = 2,          // unknown flag, missing or malformed argument
    exit_missing_input = 3,  // an input file does not exist
    exit_config = 4,         // config type error, unknown key, invalid value
    exit_invalid_input = 5,  // input exists but cannot be used
};

/// Maps an Error::code() to the process exit status.
int exit_code_for(const std::string& error_code);

/// Runs one subcommand. args[0] is the program name. Failures print exactly
/// one line `error: code=<code> message=<text>` to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

} // namespace cellstorm::cli
