#pragma once

#include <iosfwd>

namespace ctxforge {

/// Entry point of the ctxforge command line. Exit codes: 0 success, 2 config error,
/// 3 data error, 4 service error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctxforge
