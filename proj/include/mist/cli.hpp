#ifndef MIST_CLI_HPP
#define MIST_CLI_HPP

#include <string>
#include <vector>

namespace mist::cli {

// Exit codes: 0 success, 1 completed with per-item failures, 2 fatal error,
// 64 usage error.
int dispatch(const std::vector<std::string>& args);

}  // namespace mist::cli

#endif
