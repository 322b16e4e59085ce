#pragma once

namespace cist {

// Entry point behind tools/cist_main.cpp; also called in-process by tests.
// Exit codes: 0 success, 1 usage, 2 input/format, 3 verification failure,
// 4 training divergence.
int run_cli(int argc, const char* const* argv);

}  // namespace cist
