#pragma once

// Pipeline front end. Exit codes: 0 success, 1 usage, 2 data error,
// 3 numerical failure.

#include <iosfwd>
#include <span>
#include <string>

namespace cnncap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

int run(int argc, const char* const* argv);

/// Convenience for tests: argv[0] is supplied.
int run(std::span<const std::string> args);

} // namespace cnncap::cli
