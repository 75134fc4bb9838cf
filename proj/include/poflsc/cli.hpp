#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace poflsc {

// Exit codes are part of the scripting contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNoPool = 3;
inline constexpr int kExitVerifyFail = 4;

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace poflsc
