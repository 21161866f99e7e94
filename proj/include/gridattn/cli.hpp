// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace gridattn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line (subcommands extract, pack, train, eval, viz,
/// synth) and returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gridattn::cli
