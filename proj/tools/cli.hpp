#pragma once

#include <iosfwd>

namespace hdmargin::cli {

// Exit codes: 0 success, 1 usage or input error, 2 numerical failure.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kNumerical = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hdmargin::cli
