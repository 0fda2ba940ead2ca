#pragma once

#include <ostream>

namespace bodybench {

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;  // bad flags, unreadable or unwritable paths, malformed inputs

// bodybench gen | fit | eval | report | selftest. Every flag can also come
// from the environment as BODYBENCH_<FLAG>, e.g. BODYBENCH_SEED=7 or
// BODYBENCH_MISS_RATE=0.3; the command line wins.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bodybench
