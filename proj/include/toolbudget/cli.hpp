#pragma once
// Command-line entry point. Kept in the library so tests can drive the
// dispatcher in-process.
//
// Exit codes: 0 success, 1 task failures / invariant violations, 2 config
// or usage errors.

#include <string>
#include <vector>

namespace toolbudget {

int cli_dispatch(const std::vector<std::string>& args);

}  // namespace toolbudget
