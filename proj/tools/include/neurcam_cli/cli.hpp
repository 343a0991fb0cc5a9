#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace neurcam::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name. Results go to `out`,
/// diagnostics and progress to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Worker cap from NEURCAM_THREADS (unset or invalid: hardware concurrency).
std::size_t thread_budget();

}  // namespace neurcam::cli
