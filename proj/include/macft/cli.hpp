#pragma once

namespace macft {

// Entry point for the `macft` tool. Exit codes: 0 success, 1 runtime failure
// (message on stderr), 2 flag/usage errors (usage text on stderr).
int run_cli(int argc, char** argv);

// MACFT_THREADS (>= 1) caps worker parallelism; all current kernels are
// single-threaded, so the cap is validated and honored trivially.
int thread_cap();

}  // namespace macft
