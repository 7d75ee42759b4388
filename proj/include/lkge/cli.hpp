#pragma once

namespace lkge {

// Entry point of lkge-bench. Returns the process exit code: 0 on success or
// help, 1 on runtime errors, 2 on usage and configuration errors.
int run_cli(int argc, const char* const* argv);

}  // namespace lkge
