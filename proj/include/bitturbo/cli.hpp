#pragma once

#include <iosfwd>

namespace bitturbo {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `bitturbo` command line: train, quantize, eval, cost,
/// bench and pack. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bitturbo
