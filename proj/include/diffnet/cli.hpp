#pragma once

namespace diffnet::cli {

// Entry point for the diffnet tool. Returns the process exit code:
// 0 success, 1 usage error, 2 config/data error, 3 training abort.
int run(int argc, const char* const* argv);

}  // namespace diffnet::cli
