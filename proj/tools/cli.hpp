#pragma once

// Batch front-end: simulate, curve, calibrate, scale and optimize commands.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace spreadvol::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitIo = 2,
    kExitInvalidInput = 3,
    kExitNumerical = 4,
};

/// Looks up an environment variable; empty optional when unset.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// The process environment.
EnvLookup process_environment();

/// Runs one command line (args[0] is the program name) and returns its exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const EnvLookup& env = process_environment());

int run(int argc, const char* const* argv);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

/// Duration in reference time units. Accepts "250ms", "1.5s", "2m", "1h",
/// "1d"; a bare number is already in reference units. `unit_ms` is the
/// length of one reference unit in milliseconds.
double parse_duration(const std::string& text, double unit_ms);

}  // namespace spreadvol::cli
